use floodlab::enkf::{
    forecast, propagate, run_assimilation, run_cycle, station_series, CycleStart, CycleWindow,
    DaContext, EnkfConfig, GaugeObservationSet,
};
use floodlab::twinlab::{build_truth, default_twin, generate_gauge_obs, EventShape, TwinScenario};
use floodlab::uncertainty::{sample_prior, ControlPrior, ControlVector};

const HOUR: f64 = 3600.0;

fn windows(n: usize) -> Vec<CycleWindow> {
    let w = CycleWindow::schedule(3.0 * HOUR, 200.0 * HOUR, 12.0 * HOUR, 6.0 * HOUR, 3.0 * HOUR).unwrap();
    w[..n].to_vec()
}

fn twin_with(truth: ControlVector) -> TwinScenario {
    let mut tw = default_twin(EventShape::SinglePeak, 11).unwrap();
    tw.truth_control = truth;
    tw.truth_bias.clear();
    tw
}

fn gauges(tw: &TwinScenario, tau: f64) -> GaugeObservationSet {
    let truth = build_truth(tw).unwrap();
    let mut obs = generate_gauge_obs(&truth.stations, &tw.sampling_times(), tw.obs_noise, &tw.truth_bias, tw.seed);
    obs.tau = tau;
    obs
}

fn config(seed: u64) -> EnkfConfig {
    EnkfConfig { seed, forecast_leads: vec![], ..EnkfConfig::default() }
}

#[test]
fn twin_pulls_ks1_toward_truth() {
    let prior = ControlPrior::default();
    let tw = twin_with(ControlVector { ks1: 40.0, ..prior.mean });
    let obs = gauges(&tw, 0.15);
    let cfg = config(7);
    let ctx = DaContext { scenario: &tw.scenario, prior: &prior, obs: &obs, config: &cfg };
    let run = run_assimilation(&ctx, &windows(2), &tw.scenario.initial, &[], |_, _| Ok(())).unwrap();
    let xa = run.cycles[1].record.xa();
    let ks1 = xa.row(1).sum() / xa.ncols() as f64;
    assert!((ks1 - 40.0).abs() < (45.0_f64 - 40.0).abs(), "ks1 after 2 cycles: {ks1}");
}

#[test]
fn member_observing_itself_keeps_its_control() {
    let prior = ControlPrior::default();
    let tw = twin_with(prior.mean);
    let cfg = config(3);
    let window = windows(1)[0];
    let member = sample_prior(&prior, cfg.n_e, cfg.seed).unwrap().members[0];
    let times: Vec<f64> = tw.sampling_times().into_iter().filter(|&t| t >= window.t_start && t <= window.t_end).collect();
    let traj = propagate(&tw.scenario, &member, &tw.scenario.initial, window.t_end, &times).unwrap();
    let mut obs = generate_gauge_obs(&station_series(&traj, &tw.scenario.grid), &times, 0.0, &Default::default(), 1);
    obs.tau = 1e-4;
    let ctx = DaContext { scenario: &tw.scenario, prior: &prior, obs: &obs, config: &cfg };
    let restarts = vec![tw.scenario.initial.clone(); cfg.n_e];
    let out = run_cycle(&ctx, 1, window, CycleStart::Prior, &restarts, &[]).unwrap();
    // the member's innovation is its own perturbation only, so its increment
    // is a small fraction of the other members' increments
    let step = |i: usize| -> f64 {
        let (f, a) = (out.record.forecast.members[i].to_array(), out.record.analysis[i].to_array());
        (0..7).map(|k| ((a[k] - f[k]) / prior.sigma[k]).powi(2)).sum::<f64>().sqrt()
    };
    let mut others: Vec<f64> = (1..cfg.n_e).map(step).collect();
    others.sort_by(f64::total_cmp);
    let median = others[others.len() / 2];
    assert!(step(0) < 0.15 * median, "own step {} vs median {median}", step(0));
}

#[test]
fn cycles_are_deterministic_and_chain_bit_exactly() {
    let prior = ControlPrior::default();
    let tw = default_twin(EventShape::SinglePeak, 5).unwrap();
    let obs = gauges(&tw, 0.15);
    let cfg = config(21);
    let ctx = DaContext { scenario: &tw.scenario, prior: &prior, obs: &obs, config: &cfg };
    let ws = windows(2);
    let run = run_assimilation(&ctx, &ws, &tw.scenario.initial, &[], |_, _| Ok(())).unwrap();
    let again = run_assimilation(&ctx, &ws, &tw.scenario.initial, &[], |_, _| Ok(())).unwrap();
    assert_eq!(run, again);

    let first = &run.cycles[0];
    for (i, control) in first.record.analysis.iter().enumerate() {
        // an independent rerun uses a different output schedule, hence
        // different step lengths: close but not bit-identical
        let t = ws[0].next_restart_time();
        let traj = propagate(&tw.scenario, control, &tw.scenario.initial, t, &[t]).unwrap();
        let restart = &first.next_restarts[i];
        assert_eq!(restart.t, t);
        let dh = traj.final_state.h.iter().zip(&restart.h).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dh < 1e-2, "member {i}: {dh}");
    }
    let second = run_cycle(
        &ctx,
        2,
        ws[1],
        CycleStart::Previous(&first.record.analysis),
        &first.next_restarts,
        &[],
    )
    .unwrap();
    assert_eq!(second, run.cycles[1]);

    for rec in run.cycles.iter().map(|c| &c.record) {
        assert_eq!(rec.xa().shape(), (7, cfg.n_e));
        assert_eq!(rec.gain.shape(), (7, rec.obs.len()));
        assert!(rec.gain.iter().all(|g| g.is_finite()));
    }
}

#[test]
fn zero_lead_forecast_is_the_restart() {
    let prior = ControlPrior::default();
    let tw = default_twin(EventShape::SinglePeak, 1).unwrap();
    let members = sample_prior(&prior, 4, 2).unwrap().members;
    let t = 6.0 * HOUR;
    let restarts: Vec<_> = members
        .iter()
        .map(|m| propagate(&tw.scenario, m, &tw.scenario.initial, t, &[]).unwrap().final_state)
        .collect();
    let rows = forecast(&tw.scenario, &restarts, &members, &[0.0]).unwrap();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let cell = tw.scenario.grid.station(&row.station).unwrap().cell;
        let levels: Vec<f64> = restarts.iter().map(|s| s.surface(&tw.scenario.grid, cell)).collect();
        let mean = levels.iter().sum::<f64>() / levels.len() as f64;
        assert_eq!(row.z_mean, mean);
        assert_eq!(row.t, t);
    }
}

#[test]
fn stored_bias_absorbs_a_constant_offset() {
    let prior = ControlPrior::default();
    let mut tw = default_twin(EventShape::SinglePeak, 9).unwrap();
    tw.truth_control = prior.mean;
    tw.obs_noise = 0.0;
    let truth = build_truth(&tw).unwrap();
    let obs = generate_gauge_obs(&truth.stations, &tw.sampling_times(), 0.0, &tw.truth_bias, 1);
    let window = windows(1)[0];
    let restarts = vec![tw.scenario.initial.clone(); 24];
    let mut innovations = Vec::new();
    for bias_mode in [true, false] {
        let obs = GaugeObservationSet { tau: 0.15, bias: tw.truth_bias.clone(), ..obs.clone() };
        let cfg = EnkfConfig { bias_mode, ..config(4) };
        let ctx = DaContext { scenario: &tw.scenario, prior: &prior, obs: &obs, config: &cfg };
        let out = run_cycle(&ctx, 1, window, CycleStart::Prior, &restarts, &[]).unwrap();
        let d = out.record.mean_innovation();
        innovations.push(d.iter().map(|x| x.abs()).sum::<f64>() / d.len() as f64);
    }
    // with the bias applied only the ensemble-mean departure from the
    // prior-mean run remains; without it the offsets dominate
    assert!(innovations[0] < 0.1, "bias-on mean |innovation| {}", innovations[0]);
    assert!(innovations[1] > 0.3, "bias-off mean |innovation| {}", innovations[1]);
}
