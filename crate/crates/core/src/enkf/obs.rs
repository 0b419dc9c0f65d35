//! Gauge observations, the observation operator and bias diagnosis.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{CycleWindow, EnkfError};
use crate::seeding;
use crate::swe::{ScenarioGrid, Trajectory};

/// One water-level measurement (m).
#[derive(Debug, Clone, PartialEq)]
pub struct ObsRecord {
    pub station: String,
    pub t: f64,
    pub value: f64,
}

/// Per-station additive offsets (m), `mean(obs - model)` over a calibration period.
pub type BiasTable = BTreeMap<String, f64>;

/// Timestamped station water levels with a relative error model.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeObservationSet {
    pub records: Vec<ObsRecord>,
    /// Observation error standard deviation relative to the observed value.
    pub tau: f64,
    pub bias: BiasTable,
}

impl GaugeObservationSet {
    pub fn new(records: Vec<ObsRecord>, tau: f64) -> Result<Self, EnkfError> {
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(EnkfError::InvalidObservations(format!("tau must be >= 0, got {tau}")));
        }
        if let Some(r) = records.iter().find(|r| !(r.value.is_finite() && r.t.is_finite())) {
            return Err(EnkfError::InvalidObservations(format!(
                "non-finite record at station {} t={}",
                r.station, r.t
            )));
        }
        Ok(Self { records, tau, bias: BiasTable::new() })
    }

    pub fn with_bias(mut self, bias: BiasTable) -> Self {
        self.bias = bias;
        self
    }

    /// Records with `t_start <= t <= t_end`, in stored order.
    pub fn in_window(&self, window: &CycleWindow) -> Vec<&ObsRecord> {
        self.records.iter().filter(|r| r.t >= window.t_start && r.t <= window.t_end).collect()
    }

    /// `sigma_obs = tau * |value|` for each record.
    pub fn sigma(&self, records: &[&ObsRecord]) -> Vec<f64> {
        records.iter().map(|r| self.tau * r.value.abs()).collect()
    }

    pub fn stations(&self) -> Vec<String> {
        let mut names: Vec<String> = self.records.iter().map(|r| r.station.clone()).collect();
        names.sort();
        names.dedup();
        names
    }
}

/// Water level time series at one station.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub z: Vec<f64>,
}

impl TimeSeries {
    pub fn new(t: Vec<f64>, z: Vec<f64>) -> Self {
        debug_assert_eq!(t.len(), z.len());
        Self { t, z }
    }

    pub fn from_pairs(pairs: Vec<(f64, f64)>) -> Self {
        let (t, z) = pairs.into_iter().unzip();
        Self { t, z }
    }

    /// Linear interpolation; `None` outside the covered range.
    pub fn interp(&self, t: f64) -> Option<f64> {
        let n = self.t.len();
        if n == 0 || t < self.t[0] || t > self.t[n - 1] {
            return None;
        }
        let hi = self.t.partition_point(|&x| x < t);
        if self.t[hi] == t {
            return Some(self.z[hi]);
        }
        let lo = hi - 1;
        let w = (t - self.t[lo]) / (self.t[hi] - self.t[lo]);
        Some(self.z[lo] + w * (self.z[hi] - self.z[lo]))
    }
}

/// Station name to series.
pub type StationSeries = BTreeMap<String, TimeSeries>;

/// Free-surface elevation series at every station of the grid.
pub fn station_series(trajectory: &Trajectory, grid: &ScenarioGrid) -> StationSeries {
    grid.station_cells
        .iter()
        .map(|s| (s.name.clone(), TimeSeries::from_pairs(trajectory.surface_series(grid, s.cell))))
        .collect()
}

/// Model equivalents of `records`, optionally shifted by the stored bias.
pub fn observe_series(
    series: &StationSeries,
    records: &[&ObsRecord],
    bias: Option<&BiasTable>,
) -> Result<Vec<f64>, EnkfError> {
    records
        .iter()
        .map(|r| {
            let ts = series
                .get(&r.station)
                .ok_or_else(|| EnkfError::UnknownStation(r.station.clone()))?;
            let z = ts.interp(r.t).ok_or_else(|| EnkfError::ObservationOutsideTrajectory {
                station: r.station.clone(),
                t: r.t,
            })?;
            let offset = match bias {
                Some(b) => b.get(&r.station).copied().unwrap_or(0.0),
                None => 0.0,
            };
            Ok(z + offset)
        })
        .collect()
}

/// Observation operator over one cycle window.
pub fn observe(
    trajectory: &Trajectory,
    grid: &ScenarioGrid,
    obs: &GaugeObservationSet,
    window: &CycleWindow,
    bias_mode: bool,
) -> Result<Vec<f64>, EnkfError> {
    let records = obs.in_window(window);
    let series = station_series(trajectory, grid);
    observe_series(&series, &records, bias_mode.then_some(&obs.bias))
}

/// Per-station `mean(obs - model)` over observations in `[t0, t1]`.
pub fn estimate_bias(
    free_run: &StationSeries,
    obs: &GaugeObservationSet,
    calib_window: (f64, f64),
) -> Result<BiasTable, EnkfError> {
    let (t0, t1) = calib_window;
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in obs.records.iter().filter(|r| r.t >= t0 && r.t <= t1) {
        let ts = free_run.get(&r.station).ok_or_else(|| EnkfError::UnknownStation(r.station.clone()))?;
        let model = ts.interp(r.t).ok_or_else(|| EnkfError::ObservationOutsideTrajectory {
            station: r.station.clone(),
            t: r.t,
        })?;
        let e = sums.entry(r.station.clone()).or_insert((0.0, 0));
        e.0 += r.value - model;
        e.1 += 1;
    }
    if sums.is_empty() {
        return Err(EnkfError::NoObservations { t0, t1 });
    }
    Ok(sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect())
}

/// `n_e` perturbed copies of `y_o`, member `i` drawing from its own stream.
///
/// Returned as `n_e` rows of length `n_obs`.
pub fn perturb_observations(
    y_o: &[f64],
    sigma_obs: &[f64],
    n_e: usize,
    seed: u64,
    cycle: u64,
) -> Vec<Vec<f64>> {
    assert_eq!(y_o.len(), sigma_obs.len());
    (0..n_e)
        .map(|i| {
            let mut rng = seeding::stream(seed, seeding::OBS_PERTURBATION, &[cycle, i as u64]);
            y_o.iter()
                .zip(sigma_obs)
                .map(|(&y, &s)| {
                    let z: f64 = rng.sample(StandardNormal);
                    y + s * z
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swe::{RiverState, Station};

    fn grid() -> ScenarioGrid {
        let mut g = ScenarioGrid::flat(3, 3, 1.0, 1.0, 0.0);
        g.station_cells.push(Station { name: "S".into(), cell: 4 });
        g
    }

    fn trajectory(levels: &[(f64, f64)]) -> Trajectory {
        let g = grid();
        let states: Vec<RiverState> = levels.iter().map(|&(t, z)| RiverState::lake(&g, z, t)).collect();
        Trajectory {
            times: levels.iter().map(|l| l.0).collect(),
            final_state: states.last().unwrap().clone(),
            states,
            inflow_volume: 0.0,
            outflow_volume: 0.0,
            steps: 0,
        }
    }

    fn window(t0: f64, t1: f64) -> CycleWindow {
        CycleWindow { t_start: t0, t_end: t1, t_shift: t1 - t0, spinup: 0.0 }
    }

    fn rec(t: f64, value: f64) -> ObsRecord {
        ObsRecord { station: "S".into(), t, value }
    }

    #[test]
    fn constant_level_with_and_without_bias() {
        let traj = trajectory(&[(0.0, 5.0), (900.0, 5.0)]);
        let obs = GaugeObservationSet::new(vec![rec(450.0, 6.0)], 0.15).unwrap();
        let y = observe(&traj, &grid(), &obs, &window(0.0, 900.0), false).unwrap();
        assert_eq!(y, vec![5.0]);
        let obs = obs.with_bias(BiasTable::from([("S".to_string(), 0.72)]));
        let y = observe(&traj, &grid(), &obs, &window(0.0, 900.0), true).unwrap();
        assert!((y[0] - 5.72).abs() < 1e-12);
    }

    #[test]
    fn interpolates_between_outputs() {
        let traj = trajectory(&[(0.0, 1.0), (900.0, 2.0)]);
        let obs = GaugeObservationSet::new(vec![rec(450.0, 0.0)], 0.0).unwrap();
        let y = observe(&traj, &grid(), &obs, &window(0.0, 900.0), false).unwrap();
        assert_eq!(y, vec![1.5]);
    }

    #[test]
    fn record_outside_trajectory_is_reported() {
        let traj = trajectory(&[(0.0, 1.0), (900.0, 2.0)]);
        let obs = GaugeObservationSet::new(vec![rec(1200.0, 0.0)], 0.0).unwrap();
        let err = observe(&traj, &grid(), &obs, &window(0.0, 2000.0), false).unwrap_err();
        assert_eq!(err, EnkfError::ObservationOutsideTrajectory { station: "S".into(), t: 1200.0 });
    }

    #[test]
    fn bias_examples() {
        let model: StationSeries =
            [("S".to_string(), TimeSeries::new(vec![0.0, 1.0, 2.0], vec![3.0, 3.0, 3.0]))].into();
        let same = GaugeObservationSet::new(vec![rec(0.0, 3.0), rec(1.0, 3.0)], 0.0).unwrap();
        assert_eq!(estimate_bias(&model, &same, (0.0, 2.0)).unwrap()["S"], 0.0);

        let up = GaugeObservationSet::new(vec![rec(0.0, 3.72), rec(2.0, 3.72)], 0.0).unwrap();
        assert!((estimate_bias(&model, &up, (0.0, 2.0)).unwrap()["S"] - 0.72).abs() < 1e-12);

        let down = GaugeObservationSet::new(vec![rec(0.0, 2.8), rec(1.0, 2.74)], 0.0).unwrap();
        assert!((estimate_bias(&model, &down, (0.0, 2.0)).unwrap()["S"] + 0.23).abs() < 1e-12);

        assert!(matches!(
            estimate_bias(&model, &down, (5.0, 6.0)),
            Err(EnkfError::NoObservations { .. })
        ));
    }

    #[test]
    fn zero_sigma_perturbation_is_identity() {
        let y = [1.0, 2.0, 3.0];
        for row in perturb_observations(&y, &[0.0; 3], 5, 1, 1) {
            assert_eq!(row, y);
        }
    }

    #[test]
    fn perturbation_statistics() {
        let rows = perturb_observations(&[10.0], &[1.5], 10_000, 3, 1);
        let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let s = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
        assert!((s - 1.5).abs() < 0.05 * 1.5, "std {s}");
    }

    #[test]
    fn relative_error_model() {
        let obs = GaugeObservationSet::new(vec![rec(0.0, 10.0)], 0.15).unwrap();
        let recs = obs.in_window(&window(0.0, 1.0));
        assert!((obs.sigma(&recs)[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn negative_tau_rejected() {
        assert!(GaugeObservationSet::new(vec![], -0.1).is_err());
    }
}
