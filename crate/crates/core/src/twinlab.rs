//! Twin-experiment scenarios: a hidden truth run and the synthetic
//! observations (gauges and flood-extent masks) derived from it.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::enkf::{station_series, BiasTable, GaugeObservationSet, ObsRecord, StationSeries};
use crate::metrics::{rasterize_flood_mask, FloodMask, WET_THRESHOLD};
use crate::seeding;
use crate::swe::{
    self, Hydrograph, PhysicalParams, RatingCurve, RiverState, Scenario, ScenarioGrid, SolverError,
    Station, Trajectory,
};
use crate::uncertainty::{ControlPrior, ControlVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TwinError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("invalid twin scenario: {0}")]
    Invalid(String),
}

/// Gamma-shaped flood pulse added to the base flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulse {
    /// Time the pulse starts rising (s).
    pub t_onset: f64,
    pub t_peak: f64,
    /// Peak discharge above base flow (m³/s).
    pub q_peak: f64,
    /// Shape exponent; larger is sharper.
    pub shape: f64,
}

impl Pulse {
    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.t_onset {
            return 0.0;
        }
        let r = (t - self.t_onset) / (self.t_peak - self.t_onset);
        self.q_peak * (r.powf(self.shape) * (self.shape * (1.0 - r)).exp())
    }
}

/// Base flow plus superposed pulses, sampled every `dt` over `[0, t_end]`.
pub fn event_hydrograph(base: f64, pulses: &[Pulse], t_end: f64, dt: f64) -> Hydrograph {
    let n = (t_end / dt).ceil() as usize;
    let samples = (0..=n)
        .map(|k| {
            let t = k as f64 * dt;
            (t, base + pulses.iter().map(|p| p.eval(t)).sum::<f64>())
        })
        .collect();
    Hydrograph::new(samples).expect("strictly increasing sample times")
}

/// Geometry of the straight compound channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub nx: usize,
    pub ny: usize,
    pub length: f64,
    pub width: f64,
    /// Longitudinal bed slope (-).
    pub slope: f64,
    /// Number of central rows forming the incised river bed.
    pub channel_rows: usize,
    /// Bank height above the river bed (m).
    pub bank_height: f64,
    /// Floodplain rise from the bank to the valley edge (m).
    pub floodplain_rise: f64,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self {
            nx: 20,
            ny: 10,
            length: 20_000.0,
            width: 2_000.0,
            slope: 2e-4,
            channel_rows: 2,
            bank_height: 2.5,
            floodplain_rise: 1.5,
        }
    }
}

impl ChannelSpec {
    fn channel_range(&self) -> (usize, usize) {
        let lo = (self.ny - self.channel_rows) / 2;
        (lo, lo + self.channel_rows)
    }

    /// Grid with river-bed zones 1..3 (upstream, middle, downstream thirds)
    /// and floodplain zone 0; stations at 1/4, 1/2 and 3/4 of the length.
    pub fn build_grid(&self) -> Result<ScenarioGrid, TwinError> {
        if self.channel_rows == 0 || self.channel_rows >= self.ny || self.nx < 4 {
            return Err(TwinError::Invalid("channel must leave floodplain rows and span 4+ columns".into()));
        }
        let dx = self.length / self.nx as f64;
        let dy = self.width / self.ny as f64;
        let mut grid = ScenarioGrid::flat(self.nx, self.ny, dx, dy, 0.0);
        let (c0, c1) = self.channel_range();
        let plain_rows = c0.max(self.ny - c1).max(1);
        for j in 0..self.ny {
            // distance in rows from the channel, 0 inside it
            let off = if j < c0 { c0 - j } else if j >= c1 { j + 1 - c1 } else { 0 };
            for i in 0..self.nx {
                let k = grid.idx(i, j);
                let bed = self.slope * (self.length - (i as f64 + 0.5) * dx);
                if off == 0 {
                    grid.z_b[k] = bed;
                    grid.friction_zone_id[k] = 1 + (3 * i / self.nx) as u8;
                } else {
                    let rise = if plain_rows > 1 {
                        self.floodplain_rise * (off - 1) as f64 / (plain_rows - 1) as f64
                    } else {
                        0.0
                    };
                    grid.z_b[k] = bed + self.bank_height + rise;
                    grid.friction_zone_id[k] = 0;
                }
            }
        }
        let mid = (c0 + c1) / 2;
        for (name, frac) in [("upstream", 0.25), ("midstream", 0.5), ("downstream", 0.75)] {
            let i = ((frac * self.nx as f64) as usize).clamp(1, self.nx - 2);
            grid.station_cells.push(Station { name: name.into(), cell: grid.idx(i, mid) });
        }
        grid.upstream_cells = (c0..c1).map(|j| grid.idx(0, j)).collect();
        grid.downstream_cells = (0..self.ny).map(|j| grid.idx(self.nx - 1, j)).collect();
        grid.validate()?;
        Ok(grid)
    }

    /// Normal-flow stage-discharge relation across the outlet column, using
    /// the prior-mean Strickler coefficients of the outlet zones.
    pub fn outlet_rating_curve(&self, grid: &ScenarioGrid, prior: &ControlPrior) -> RatingCurve {
        let ks = prior.mean.friction().ks;
        let i = grid.nx - 1;
        let beds: Vec<(f64, f64)> = (0..grid.ny)
            .map(|j| {
                let k = grid.idx(i, j);
                (grid.z_b[k], ks[grid.friction_zone_id[k] as usize])
            })
            .collect();
        let z0 = beds.iter().map(|b| b.0).fold(f64::INFINITY, f64::min);
        let top = self.bank_height + self.floodplain_rise + 6.0;
        let n = 200;
        let samples = (0..=n)
            .map(|k| {
                let stage = z0 + top * k as f64 / n as f64;
                let q: f64 = beds
                    .iter()
                    .map(|&(zb, ks)| {
                        let h = (stage - zb).max(0.0);
                        grid.dy * ks * h.powf(5.0 / 3.0) * self.slope.sqrt()
                    })
                    .sum();
                (stage, q)
            })
            .collect();
        RatingCurve::new(samples).expect("monotone by construction")
    }

    /// Channel-only state at normal depth for discharge `q`.
    pub fn normal_depth_state(&self, grid: &ScenarioGrid, q: f64, ks: f64) -> RiverState {
        let (c0, c1) = self.channel_range();
        let w = (c1 - c0) as f64 * grid.dy;
        let h = (q / (w * ks * self.slope.sqrt())).powf(0.6);
        let mut s = RiverState::dry(grid.len(), 0.0);
        for j in c0..c1 {
            for i in 0..grid.nx {
                s.h[grid.idx(i, j)] = h;
            }
        }
        s
    }
}

/// Misclassification and unreliable-area model for synthetic extent maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtentDegradation {
    /// Probability of flipping each reliable pixel.
    pub flip_prob: f64,
    /// Share of the domain marked as excluded.
    pub exclusion_fraction: f64,
    /// Largest contiguous excluded patch, in pixels.
    pub max_patch: usize,
}

impl Default for ExtentDegradation {
    fn default() -> Self {
        Self { flip_prob: 0.02, exclusion_fraction: 0.086, max_patch: 8 }
    }
}

impl ExtentDegradation {
    pub fn validate(&self) -> Result<(), TwinError> {
        if !(0.0..0.5).contains(&self.flip_prob) {
            return Err(TwinError::Invalid(format!("flip_prob {} not in [0, 0.5)", self.flip_prob)));
        }
        if !(0.0..1.0).contains(&self.exclusion_fraction) {
            return Err(TwinError::Invalid(format!(
                "exclusion_fraction {} not in [0, 1)",
                self.exclusion_fraction
            )));
        }
        if self.max_patch == 0 {
            return Err(TwinError::Invalid("max_patch must be positive".into()));
        }
        Ok(())
    }
}

/// Scenario plus the hidden truth and the synthetic observation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinScenario {
    pub scenario: Scenario,
    pub truth_control: ControlVector,
    pub truth_bias: BiasTable,
    /// End of the simulated event (s).
    pub event_end: f64,
    pub overpass_times: Vec<f64>,
    pub seed: u64,
    /// Gauge sampling interval (s).
    pub sampling_dt: f64,
    /// Relative noise of the generated gauge records.
    pub obs_noise: f64,
    pub degradation: ExtentDegradation,
    /// Constant-forcing integration applied before `t = 0` so each run starts
    /// from its own equilibrium.
    pub warmup: f64,
}

/// Shape of the default event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EventShape {
    #[default]
    SinglePeak,
    DoublePeak,
}

impl EventShape {
    pub fn pulses(self) -> Vec<Pulse> {
        match self {
            Self::SinglePeak => vec![Pulse { t_onset: 86_400.0, t_peak: 162_000.0, q_peak: 2_100.0, shape: 3.0 }],
            Self::DoublePeak => vec![
                Pulse { t_onset: 86_400.0, t_peak: 129_600.0, q_peak: 1_600.0, shape: 5.0 },
                Pulse { t_onset: 180_000.0, t_peak: 230_400.0, q_peak: 1_900.0, shape: 5.0 },
            ],
        }
    }

    fn event_end(self) -> f64 {
        match self {
            Self::SinglePeak => 259_200.0,
            Self::DoublePeak => 302_400.0,
        }
    }
}

/// Default twin: compound channel, quiet first day, one or two flood pulses.
pub fn default_twin(shape: EventShape, seed: u64) -> Result<TwinScenario, TwinError> {
    let spec = ChannelSpec::default();
    let prior = ControlPrior::default();
    let grid = spec.build_grid()?;
    let rating_curve = spec.outlet_rating_curve(&grid, &prior);
    let event_end = shape.event_end();
    let base_flow = 400.0;
    // forcing extends a day past the event so +24 h forecasts stay defined
    let hydrograph = event_hydrograph(base_flow, &shape.pulses(), event_end + 86_400.0, 900.0);
    let params = PhysicalParams::default();
    let guess = spec.normal_depth_state(&grid, base_flow, prior.mean.ks2);
    let mut scenario = Scenario { grid, params, hydrograph, rating_curve, initial: guess };
    scenario.initial = warm_start(&scenario, &prior.mean, 172_800.0)?;
    let truth_control = ControlVector { ks0: 15.5, ks1: 40.0, ks2: 35.0, ks3: 45.0, a: 1.03, b: -40.0, c: -1_800.0 };
    let truth_bias: BiasTable = [("upstream", 0.72), ("midstream", 0.40), ("downstream", -0.23)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    let overpass_times = match shape {
        EventShape::SinglePeak => vec![108_000.0, 151_200.0, 180_000.0, 208_800.0, 237_600.0],
        EventShape::DoublePeak => vec![108_000.0, 136_800.0, 187_200.0, 237_600.0, 266_400.0],
    };
    let tw = TwinScenario {
        scenario,
        truth_control,
        truth_bias,
        event_end,
        overpass_times,
        seed,
        sampling_dt: 900.0,
        obs_noise: 0.005,
        degradation: ExtentDegradation::default(),
        warmup: 43_200.0,
    };
    tw.validate()?;
    Ok(tw)
}

impl TwinScenario {
    pub fn validate(&self) -> Result<(), TwinError> {
        self.scenario.validate()?;
        self.degradation.validate()?;
        let t0 = self.scenario.initial.t;
        if !(self.event_end > t0) {
            return Err(TwinError::Invalid(format!("event_end {} must follow t0 {t0}", self.event_end)));
        }
        if let Some(t) = self.overpass_times.iter().find(|&&t| t < t0 || t > self.event_end) {
            return Err(TwinError::Invalid(format!("overpass at {t} s outside the event window")));
        }
        if !(self.sampling_dt > 0.0 && self.obs_noise >= 0.0 && self.warmup >= 0.0) {
            return Err(TwinError::Invalid("sampling_dt > 0, obs_noise >= 0 and warmup >= 0 required".into()));
        }
        for name in self.truth_bias.keys() {
            if self.scenario.grid.station(name).is_none() {
                return Err(TwinError::Invalid(format!("bias for unknown station {name}")));
            }
        }
        Ok(())
    }

    /// Gauge sampling instants over the event.
    pub fn sampling_times(&self) -> Vec<f64> {
        let t0 = self.scenario.initial.t;
        let n = ((self.event_end - t0) / self.sampling_dt).floor() as usize;
        (0..=n).map(|k| t0 + k as f64 * self.sampling_dt).collect()
    }
}

/// Integrate `scenario.initial` for `duration` under the discharge the
/// control sees at the initial time, and reset the clock.
pub fn warm_start(scenario: &Scenario, control: &ControlVector, duration: f64) -> Result<RiverState, SolverError> {
    let t0 = scenario.initial.t;
    let q0 = control.inflow(&scenario.hydrograph).eval(t0);
    let mut start = scenario.initial.clone();
    start.t = 0.0;
    let traj = swe::run(
        &scenario.grid,
        &scenario.params,
        &control.friction(),
        &Hydrograph::constant(q0),
        Some(&scenario.rating_curve),
        &start,
        duration,
        &[],
    )?;
    let mut state = traj.final_state;
    state.t = t0;
    Ok(state)
}

/// A deterministic run over the event with one control vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRun {
    pub trajectory: Trajectory,
    pub stations: StationSeries,
}

impl EventRun {
    pub fn state_at(&self, t: f64) -> Option<&RiverState> {
        self.trajectory.state_at(t)
    }
}

/// Warm start plus the event with `control`, saving the sampling and overpass times.
///
/// With the prior-mean control this is the free run.
pub fn simulate_event(tw: &TwinScenario, control: &ControlVector) -> Result<EventRun, TwinError> {
    let scenario = &tw.scenario;
    let start = warm_start(scenario, control, tw.warmup)?;
    let mut outputs = tw.sampling_times();
    outputs.extend(tw.overpass_times.iter().copied());
    let trajectory = crate::enkf::propagate(scenario, control, &start, tw.event_end, &outputs)?;
    let stations = station_series(&trajectory, &scenario.grid);
    Ok(EventRun { trajectory, stations })
}

/// The hidden truth: the event under `truth_control`.
pub fn build_truth(tw: &TwinScenario) -> Result<EventRun, TwinError> {
    tw.validate()?;
    simulate_event(tw, &tw.truth_control)
}

/// `obs = level + bias + N(0, (tau * level)^2)` at every sampling time.
///
/// Station `k` (in name order) draws from its own stream. The returned set
/// carries `tau` as its error model; callers assimilating it set their own.
pub fn generate_gauge_obs(
    truth: &StationSeries,
    times: &[f64],
    tau: f64,
    bias: &BiasTable,
    seed: u64,
) -> GaugeObservationSet {
    let mut records = Vec::new();
    for (k, (name, ts)) in truth.iter().enumerate() {
        let mut rng = seeding::stream(seed, seeding::OBS_GENERATION, &[k as u64]);
        let offset = bias.get(name).copied().unwrap_or(0.0);
        for &t in times {
            let Some(level) = ts.interp(t) else { continue };
            let z: f64 = rng.sample(StandardNormal);
            records.push(ObsRecord { station: name.clone(), t, value: level + offset + tau * level.abs() * z });
        }
    }
    GaugeObservationSet { records, tau, bias: BiasTable::new() }
}

/// Contiguous excluded patches covering `round(fraction * n)` pixels.
pub fn exclusion_mask(nx: usize, ny: usize, fraction: f64, max_patch: usize, seed: u64) -> Vec<bool> {
    let n = nx * ny;
    let target = ((fraction * n as f64).round() as usize).min(n);
    let mut mask = vec![false; n];
    let mut count = 0;
    let mut rng = seeding::stream(seed, seeding::EXCLUSION_PLACEMENT, &[]);
    while count < target {
        let seed_cell = rng.gen_range(0..n);
        if mask[seed_cell] {
            continue;
        }
        let size = rng.gen_range(1..=max_patch.max(1)).min(target - count);
        // random-order region growing from the seed cell
        let mut frontier = VecDeque::from([seed_cell]);
        let mut grown = 0;
        while grown < size {
            let Some(k) = frontier.pop_front() else { break };
            if mask[k] {
                continue;
            }
            mask[k] = true;
            grown += 1;
            let (i, j) = (k % nx, k / nx);
            let mut nbrs = Vec::with_capacity(4);
            if i > 0 {
                nbrs.push(k - 1);
            }
            if i + 1 < nx {
                nbrs.push(k + 1);
            }
            if j > 0 {
                nbrs.push(k - nx);
            }
            if j + 1 < ny {
                nbrs.push(k + nx);
            }
            nbrs.shuffle(&mut rng);
            frontier.extend(nbrs.into_iter().filter(|&m| !mask[m]));
        }
        count += grown;
    }
    mask
}

/// Rasterize the truth, flip reliable pixels and attach the exclusion mask.
///
/// `overpass` selects the flip stream, so every overpass has independent noise.
pub fn generate_flood_extent_obs(
    state: &RiverState,
    grid: &ScenarioGrid,
    threshold: f64,
    degradation: &ExtentDegradation,
    exclusion: &[bool],
    seed: u64,
    overpass: u64,
) -> FloodMask {
    let mut mask = rasterize_flood_mask(state, grid, threshold);
    let mut rng = seeding::stream(seed, seeding::EXTENT_GENERATION, &[overpass]);
    for (w, &ex) in mask.wet.iter_mut().zip(exclusion) {
        // one draw per pixel keeps the stream aligned across settings
        let flip = rng.gen::<f64>() < degradation.flip_prob;
        if flip && !ex {
            *w = !*w;
        }
    }
    mask.with_exclusion(exclusion.to_vec())
}

/// Extent observations at every overpass of the twin.
pub fn extent_observations(tw: &TwinScenario, truth: &EventRun) -> Result<Vec<(f64, FloodMask)>, TwinError> {
    let grid = &tw.scenario.grid;
    let d = &tw.degradation;
    let exclusion = exclusion_mask(grid.nx, grid.ny, d.exclusion_fraction, d.max_patch, tw.seed);
    tw.overpass_times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let state = truth
                .state_at(t)
                .ok_or_else(|| TwinError::Invalid(format!("truth has no state at overpass {t}")))?;
            Ok((t, generate_flood_extent_obs(state, grid, WET_THRESHOLD, d, &exclusion, tw.seed, k as u64)))
        })
        .collect()
}

/// Time of the highest truth level at `station`.
pub fn peak_time(series: &StationSeries, station: &str) -> Option<f64> {
    let ts = series.get(station)?;
    let k = (0..ts.z.len()).max_by(|&a, &b| ts.z[a].total_cmp(&ts.z[b]))?;
    Some(ts.t[k])
}

/// Overpass closest to `t` (earliest on ties).
pub fn nearest_overpass(overpasses: &[f64], t: f64) -> Option<usize> {
    (0..overpasses.len()).min_by(|&a, &b| (overpasses[a] - t).abs().total_cmp(&(overpasses[b] - t).abs()))
}
