//! Cycled assimilation: forecast ensemble, analysis, analyzed rerun, +24 h forecasts.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::analysis::{analysis, CovarianceNormalization};
use super::obs::{
    observe_series, perturb_observations, station_series, BiasTable, GaugeObservationSet,
    ObsRecord, StationSeries, TimeSeries,
};
use super::EnkfError;
use crate::swe::{self, RiverState, Scenario, Trajectory};
use crate::uncertainty::{
    resample_around_mean, sample_prior, ControlPrior, ControlVector, Ensemble, N_CONTROL,
};

/// One assimilation window `[t_start, t_end]` and its cycling parameters.
///
/// Members are integrated from `t_start - spinup`; the next cycle restarts
/// from the state saved at `t_start + t_shift - spinup`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleWindow {
    pub t_start: f64,
    pub t_end: f64,
    pub t_shift: f64,
    pub spinup: f64,
}

impl CycleWindow {
    pub fn length(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn run_start(&self) -> f64 {
        self.t_start - self.spinup
    }

    /// Time of the restart handed to the next cycle.
    pub fn next_restart_time(&self) -> f64 {
        self.t_start + self.t_shift - self.spinup
    }

    pub fn validate(&self) -> Result<(), EnkfError> {
        let len = self.length();
        if !(len > 0.0) {
            return Err(EnkfError::InvalidWindow(format!("empty window [{}, {}]", self.t_start, self.t_end)));
        }
        if !(self.t_shift > 0.0 && self.t_shift <= len) {
            return Err(EnkfError::InvalidWindow(format!("t_shift {} not in (0, {len}]", self.t_shift)));
        }
        if !(self.spinup >= 0.0 && self.spinup <= self.t_shift) {
            return Err(EnkfError::InvalidWindow(format!(
                "spinup {} must lie in [0, t_shift]",
                self.spinup
            )));
        }
        Ok(())
    }

    /// Consecutive windows starting at `first_start`, all ending by `horizon_end`.
    pub fn schedule(
        first_start: f64,
        horizon_end: f64,
        length: f64,
        t_shift: f64,
        spinup: f64,
    ) -> Result<Vec<CycleWindow>, EnkfError> {
        let proto = CycleWindow { t_start: first_start, t_end: first_start + length, t_shift, spinup };
        proto.validate()?;
        let mut out = Vec::new();
        let mut k = 0u32;
        loop {
            let t_start = first_start + f64::from(k) * t_shift;
            let t_end = t_start + length;
            if t_end > horizon_end {
                break;
            }
            out.push(CycleWindow { t_start, t_end, t_shift, spinup });
            k += 1;
        }
        Ok(out)
    }
}

/// Settings shared by every cycle of an assimilation run.
#[derive(Debug, Clone, PartialEq)]
pub struct EnkfConfig {
    pub n_e: usize,
    pub tau: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub normalization: CovarianceNormalization,
    /// Add the stored per-station bias to the model equivalents.
    pub bias_mode: bool,
    pub seed: u64,
    /// Forecast lead times (s) launched from every cycle's `t_end`.
    pub forecast_leads: Vec<f64>,
    /// Spacing of saved analyzed station outputs (s).
    pub output_interval: f64,
}

impl Default for EnkfConfig {
    fn default() -> Self {
        Self {
            n_e: 24,
            tau: 0.15,
            lambda1: 0.3,
            lambda2: 0.7,
            normalization: CovarianceNormalization::Ensemble,
            bias_mode: false,
            seed: 0,
            forecast_leads: vec![21_600.0, 43_200.0, 64_800.0, 86_400.0],
            output_interval: 900.0,
        }
    }
}

/// Everything recorded by the analysis of one cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisRecord {
    pub cycle: usize,
    pub window: CycleWindow,
    /// Forecast (background) controls with their sampling sigma.
    pub forecast: Ensemble,
    pub obs: Vec<ObsRecord>,
    pub obs_sigma: Vec<f64>,
    /// Model equivalents, `n_obs x N_e`.
    pub yf: DMatrix<f64>,
    /// Perturbed observations, `n_obs x N_e`.
    pub y_obs_ens: DMatrix<f64>,
    pub analysis: Vec<ControlVector>,
    /// Kalman gain, `n x n_obs`.
    pub gain: DMatrix<f64>,
    /// Times of the saved restarts: next cycle start and window end.
    pub restart_times: (f64, f64),
}

impl AnalysisRecord {
    pub fn xf(&self) -> DMatrix<f64> {
        controls_matrix(&self.forecast.members)
    }

    pub fn xa(&self) -> DMatrix<f64> {
        controls_matrix(&self.analysis)
    }

    /// `y_o - mean(y_f)` per observation.
    pub fn mean_innovation(&self) -> Vec<f64> {
        let mean = self.yf.column_mean();
        self.obs.iter().enumerate().map(|(k, r)| r.value - mean[k]).collect()
    }
}

pub fn controls_matrix(members: &[ControlVector]) -> DMatrix<f64> {
    DMatrix::from_fn(N_CONTROL, members.len(), |i, j| members[j].to_array()[i])
}

fn matrix_controls(m: &DMatrix<f64>) -> Vec<ControlVector> {
    (0..m.ncols())
        .map(|j| {
            let mut x = [0.0; N_CONTROL];
            for (i, v) in x.iter_mut().enumerate() {
                *v = m[(i, j)];
            }
            ControlVector::from_array(x)
        })
        .collect()
}

/// Inputs fixed for the whole assimilation run.
#[derive(Clone, Copy)]
pub struct DaContext<'a> {
    pub scenario: &'a Scenario,
    pub prior: &'a ControlPrior,
    pub obs: &'a GaugeObservationSet,
    pub config: &'a EnkfConfig,
}

/// Where the forecast controls of a cycle come from.
#[derive(Debug, Clone, Copy)]
pub enum CycleStart<'a> {
    /// First cycle: draw from the prior.
    Prior,
    /// Later cycles: resample around the previous analysis.
    Previous(&'a [ControlVector]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleOutput {
    pub record: AnalysisRecord,
    /// Per-member states at `window.next_restart_time()`.
    pub next_restarts: Vec<RiverState>,
    /// Per-member states at `window.t_end`, used to launch forecasts.
    pub end_restarts: Vec<RiverState>,
    /// Per-member analyzed station series over the window.
    pub analyzed_series: Vec<StationSeries>,
    /// Ensemble-mean analyzed states at the requested snapshot times.
    pub snapshots: Vec<RiverState>,
}

/// Integrate one member with the given controls.
pub fn propagate(
    scenario: &Scenario,
    control: &ControlVector,
    initial: &RiverState,
    t_end: f64,
    output_times: &[f64],
) -> Result<Trajectory, swe::SolverError> {
    let inflow = control.inflow(&scenario.hydrograph);
    swe::run(
        &scenario.grid,
        &scenario.params,
        &control.friction(),
        &inflow,
        Some(&scenario.rating_curve),
        initial,
        t_end,
        output_times,
    )
}

fn regular_times(t0: f64, t1: f64, dt: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let first = (t0 / dt).ceil() as i64;
    let last = (t1 / dt).floor() as i64;
    for k in first..=last {
        out.push(k as f64 * dt);
    }
    out
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Run one full cycle: forecast, analysis and analyzed rerun.
pub fn run_cycle(
    ctx: &DaContext<'_>,
    cycle: usize,
    window: CycleWindow,
    start: CycleStart<'_>,
    restarts: &[RiverState],
    snapshot_times: &[f64],
) -> Result<CycleOutput, EnkfError> {
    window.validate()?;
    let cfg = ctx.config;
    let scenario = ctx.scenario;
    if restarts.len() != cfg.n_e {
        return Err(EnkfError::ShapeMismatch(format!(
            "{} restarts for {} members",
            restarts.len(),
            cfg.n_e
        )));
    }
    if let Some(i) = restarts.iter().position(|r| r.t != window.run_start()) {
        return Err(EnkfError::RestartTime { member: i, expected: window.run_start(), found: restarts[i].t });
    }

    // (i) forecast controls
    let forecast = match start {
        CycleStart::Prior => sample_prior(ctx.prior, cfg.n_e, cfg.seed)?,
        CycleStart::Previous(prev) => {
            resample_around_mean(prev, ctx.prior, cfg.lambda1, cfg.lambda2, cfg.seed, cycle as u64)?
        }
    };

    // (ii) spin-up and propagation over the window
    let records = ctx.obs.in_window(&window);
    let obs_times = sorted_unique(records.iter().map(|r| r.t).collect());
    let bias = cfg.bias_mode.then_some(&ctx.obs.bias);
    let yf_cols: Vec<Vec<f64>> = forecast
        .members
        .par_iter()
        .zip(restarts.par_iter())
        .enumerate()
        .map(|(i, (control, restart))| {
            let traj = propagate(scenario, control, restart, window.t_end, &obs_times)
                .map_err(|source| EnkfError::MemberFailed { cycle, member: i, source })?;
            observe_series(&station_series(&traj, &scenario.grid), &records, bias)
        })
        .collect::<Result<_, _>>()?;

    // (iii) analysis
    let n_obs = records.len();
    let yf = DMatrix::from_fn(n_obs, cfg.n_e, |k, i| yf_cols[i][k]);
    let y_o: Vec<f64> = records.iter().map(|r| r.value).collect();
    let obs_sigma = ctx.obs.sigma(&records);
    let rows = perturb_observations(&y_o, &obs_sigma, cfg.n_e, cfg.seed, cycle as u64);
    let y_obs_ens = DMatrix::from_fn(n_obs, cfg.n_e, |k, i| rows[i][k]);
    let r_diag: Vec<f64> = obs_sigma.iter().map(|s| s * s).collect();
    let xf = controls_matrix(&forecast.members);
    let out = analysis(&xf, &yf, &y_obs_ens, &r_diag, cfg.normalization)?;
    let analyzed = matrix_controls(&out.xa);

    // (iv) analyzed rerun from the same restarts
    let snaps: Vec<f64> = snapshot_times
        .iter()
        .copied()
        .filter(|&t| t >= window.t_start && t <= window.t_end)
        .collect();
    let mut outputs = regular_times(window.t_start, window.t_end, cfg.output_interval);
    outputs.extend(obs_times.iter().copied());
    outputs.extend(snaps.iter().copied());
    outputs.push(window.t_start);
    outputs.push(window.t_end);
    outputs.push(window.next_restart_time());
    let outputs = sorted_unique(outputs);
    let series_times: Vec<f64> = outputs.iter().copied().filter(|&t| t >= window.t_start).collect();

    let reruns: Vec<(StationSeries, RiverState, RiverState, Vec<RiverState>)> = analyzed
        .par_iter()
        .zip(restarts.par_iter())
        .enumerate()
        .map(|(i, (control, restart))| {
            let traj = propagate(scenario, control, restart, window.t_end, &outputs)
                .map_err(|source| EnkfError::MemberFailed { cycle, member: i, source })?;
            let mut series = StationSeries::new();
            for s in &scenario.grid.station_cells {
                let pairs = series_times
                    .iter()
                    .map(|&t| (t, traj.state_at(t).expect("saved output").surface(&scenario.grid, s.cell)))
                    .collect();
                series.insert(s.name.clone(), TimeSeries::from_pairs(pairs));
            }
            let next = traj.state_at(window.next_restart_time()).expect("saved restart").clone();
            let end = traj.state_at(window.t_end).expect("saved restart").clone();
            let states = snaps.iter().map(|&t| traj.state_at(t).expect("snapshot").clone()).collect();
            Ok((series, next, end, states))
        })
        .collect::<Result<_, EnkfError>>()?;

    let mut analyzed_series = Vec::with_capacity(cfg.n_e);
    let mut next_restarts = Vec::with_capacity(cfg.n_e);
    let mut end_restarts = Vec::with_capacity(cfg.n_e);
    let mut member_snaps = Vec::with_capacity(cfg.n_e);
    for (series, next, end, states) in reruns {
        analyzed_series.push(series);
        next_restarts.push(next);
        end_restarts.push(end);
        member_snaps.push(states);
    }
    let snapshots = (0..snaps.len())
        .map(|s| mean_state(member_snaps.iter().map(|m| &m[s])))
        .collect();

    let record = AnalysisRecord {
        cycle,
        window,
        forecast,
        obs: records.into_iter().cloned().collect(),
        obs_sigma,
        yf,
        y_obs_ens,
        analysis: analyzed,
        gain: out.gain,
        restart_times: (window.next_restart_time(), window.t_end),
    };
    Ok(CycleOutput { record, next_restarts, end_restarts, analyzed_series, snapshots })
}

/// Member-average of depth and velocity, summed in member order.
pub fn mean_state<'a>(states: impl Iterator<Item = &'a RiverState>) -> RiverState {
    let mut acc: Option<RiverState> = None;
    let mut n = 0usize;
    for s in states {
        n += 1;
        match acc.as_mut() {
            None => acc = Some(s.clone()),
            Some(a) => {
                for k in 0..a.len() {
                    a.h[k] += s.h[k];
                    a.u[k] += s.u[k];
                    a.v[k] += s.v[k];
                }
            }
        }
    }
    let mut a = acc.expect("at least one state");
    let inv = 1.0 / n as f64;
    for k in 0..a.len() {
        a.h[k] *= inv;
        a.u[k] *= inv;
        a.v[k] *= inv;
    }
    a
}

/// Ensemble-mean water level at one station and lead time.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRow {
    pub station: String,
    pub lead_s: f64,
    pub t: f64,
    pub z_mean: f64,
    pub z_std: f64,
}

/// Integrate each member from its `t_end` restart with its analyzed control held fixed.
///
/// Levels are raw model values; bias offsets are left to the caller.
pub fn forecast(
    scenario: &Scenario,
    restarts: &[RiverState],
    controls: &[ControlVector],
    leads: &[f64],
) -> Result<Vec<ForecastRow>, EnkfError> {
    if restarts.len() != controls.len() || restarts.is_empty() {
        return Err(EnkfError::ShapeMismatch(format!(
            "{} restarts for {} controls",
            restarts.len(),
            controls.len()
        )));
    }
    if leads.iter().any(|l| !(*l >= 0.0)) {
        return Err(EnkfError::InvalidWindow("forecast leads must be non-negative".into()));
    }
    let t0 = restarts[0].t;
    let leads = sorted_unique(leads.to_vec());
    let Some(&max_lead) = leads.last() else {
        return Ok(Vec::new());
    };
    let times: Vec<f64> = leads.iter().map(|l| t0 + l).collect();
    let grid = &scenario.grid;
    let per_member: Vec<Vec<Vec<f64>>> = controls
        .par_iter()
        .zip(restarts.par_iter())
        .enumerate()
        .map(|(i, (control, restart))| {
            let traj = propagate(scenario, control, restart, t0 + max_lead, &times)
                .map_err(|source| EnkfError::MemberFailed { cycle: 0, member: i, source })?;
            Ok(times
                .iter()
                .map(|&t| {
                    let s = traj.state_at(t).expect("saved lead");
                    grid.station_cells.iter().map(|st| s.surface(grid, st.cell)).collect()
                })
                .collect())
        })
        .collect::<Result<_, EnkfError>>()?;

    let n = controls.len() as f64;
    let mut rows = Vec::new();
    for (li, (&lead, &t)) in leads.iter().zip(&times).enumerate() {
        for (si, st) in grid.station_cells.iter().enumerate() {
            let vals: Vec<f64> = per_member.iter().map(|m| m[li][si]).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let var = if vals.len() > 1 {
                vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            rows.push(ForecastRow { station: st.name.clone(), lead_s: lead, t, z_mean: mean, z_std: var.sqrt() });
        }
    }
    Ok(rows)
}

/// Result of a full cycled run.
#[derive(Debug, Clone, PartialEq)]
pub struct AssimilationRun {
    pub cycles: Vec<CycleOutput>,
    /// Forecast rows launched from each cycle (same order as `cycles`).
    pub forecasts: Vec<Vec<ForecastRow>>,
}

impl AssimilationRun {
    /// Ensemble mean and spread of the analyzed station levels.
    ///
    /// Each cycle contributes `[t_start, t_start + t_shift)`; the last cycle
    /// contributes its whole window.
    pub fn reanalysis(&self) -> (StationSeries, StationSeries) {
        let mut mean = StationSeries::new();
        let mut std = StationSeries::new();
        let last = self.cycles.len().saturating_sub(1);
        for (c, out) in self.cycles.iter().enumerate() {
            let w = out.record.window;
            let keep = |t: f64| if c == last { t <= w.t_end } else { t < w.t_start + w.t_shift };
            let Some(first) = out.analyzed_series.first() else { continue };
            for (station, ts) in first {
                let m = mean.entry(station.clone()).or_default();
                let s = std.entry(station.clone()).or_default();
                for (k, &t) in ts.t.iter().enumerate() {
                    if !keep(t) {
                        continue;
                    }
                    let vals: Vec<f64> = out.analyzed_series.iter().map(|ms| ms[station].z[k]).collect();
                    let n = vals.len() as f64;
                    let mu = vals.iter().sum::<f64>() / n;
                    let var = if vals.len() > 1 {
                        vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0)
                    } else {
                        0.0
                    };
                    m.t.push(t);
                    m.z.push(mu);
                    s.t.push(t);
                    s.z.push(var.sqrt());
                }
            }
        }
        (mean, std)
    }

    /// Ensemble-mean analyzed state at a snapshot time, taken from the cycle that owns it.
    pub fn snapshot(&self, t: f64, snapshot_times: &[f64]) -> Option<&RiverState> {
        let last = self.cycles.len().checked_sub(1)?;
        for (c, out) in self.cycles.iter().enumerate() {
            let w = out.record.window;
            let owns = t >= w.t_start && if c == last { t <= w.t_end } else { t < w.t_start + w.t_shift };
            if owns {
                let in_window: Vec<f64> =
                    snapshot_times.iter().copied().filter(|&s| s >= w.t_start && s <= w.t_end).collect();
                let k = in_window.iter().position(|&s| s == t)?;
                return out.snapshots.get(k);
            }
        }
        None
    }
}

/// Cycle through `windows`, chaining per-member restarts.
///
/// `initial` must be at `windows[0].run_start()`. `on_cycle` sees each cycle's
/// output (and its forecast rows) as soon as it is available.
pub fn run_assimilation<F>(
    ctx: &DaContext<'_>,
    windows: &[CycleWindow],
    initial: &RiverState,
    snapshot_times: &[f64],
    mut on_cycle: F,
) -> Result<AssimilationRun, EnkfError>
where
    F: FnMut(&CycleOutput, &[ForecastRow]) -> Result<(), EnkfError>,
{
    if windows.is_empty() {
        return Err(EnkfError::InvalidWindow("no assimilation cycles fit in the event".into()));
    }
    let mut restarts = vec![initial.clone(); ctx.config.n_e];
    let mut cycles: Vec<CycleOutput> = Vec::with_capacity(windows.len());
    let mut forecasts = Vec::with_capacity(windows.len());
    for (k, &window) in windows.iter().enumerate() {
        let cycle = k + 1;
        let start = match cycles.last() {
            None => CycleStart::Prior,
            Some(prev) => CycleStart::Previous(&prev.record.analysis),
        };
        let out = run_cycle(ctx, cycle, window, start, &restarts, snapshot_times)?;
        let rows = if ctx.config.forecast_leads.is_empty() {
            Vec::new()
        } else {
            forecast(ctx.scenario, &out.end_restarts, &out.record.analysis, &ctx.config.forecast_leads)
                .map_err(|e| match e {
                    EnkfError::MemberFailed { member, source, .. } => {
                        EnkfError::MemberFailed { cycle, member, source }
                    }
                    other => other,
                })?
        };
        on_cycle(&out, &rows)?;
        restarts = out.next_restarts.clone();
        cycles.push(out);
        forecasts.push(rows);
    }
    Ok(AssimilationRun { cycles, forecasts })
}

/// Bias offsets to add when comparing model levels to observations.
pub fn apply_bias(series: &StationSeries, bias: Option<&BiasTable>) -> StationSeries {
    series
        .iter()
        .map(|(name, ts)| {
            let b = bias.and_then(|b| b.get(name)).copied().unwrap_or(0.0);
            (name.clone(), TimeSeries::new(ts.t.clone(), ts.z.iter().map(|z| z + b).collect()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_matches_sliding_windows() {
        let w = CycleWindow::schedule(10_800.0, 10_800.0 + 43_200.0 + 3.0 * 21_600.0, 43_200.0, 21_600.0, 10_800.0)
            .unwrap();
        assert_eq!(w.len(), 4);
        assert_eq!(w[1].t_start, 10_800.0 + 21_600.0);
        assert_eq!(w[3].t_end, 10_800.0 + 43_200.0 + 3.0 * 21_600.0);
        assert_eq!(w[0].run_start(), 0.0);
        assert_eq!(w[0].next_restart_time(), w[1].run_start());
    }

    #[test]
    fn window_validation() {
        let ok = CycleWindow { t_start: 0.0, t_end: 100.0, t_shift: 50.0, spinup: 10.0 };
        assert!(ok.validate().is_ok());
        assert!(CycleWindow { t_shift: 0.0, ..ok }.validate().is_err());
        assert!(CycleWindow { t_shift: 150.0, ..ok }.validate().is_err());
        assert!(CycleWindow { spinup: 60.0, ..ok }.validate().is_err());
        assert!(CycleWindow { t_end: 0.0, ..ok }.validate().is_err());
    }

    #[test]
    fn regular_output_times() {
        assert_eq!(regular_times(100.0, 2000.0, 900.0), vec![900.0, 1800.0]);
        assert_eq!(regular_times(0.0, 1800.0, 900.0), vec![0.0, 900.0, 1800.0]);
    }
}
