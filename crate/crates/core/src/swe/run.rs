use super::boundary::{Discharge, Hydrograph, RatingCurve};
use super::grid::ScenarioGrid;
use super::solver::{stable_dt, Forcing, Solver};
use super::state::{FrictionSet, PhysicalParams, RiverState};
use super::SolverError;

/// Everything the solver needs besides friction and the (possibly perturbed) inflow.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub grid: ScenarioGrid,
    pub params: PhysicalParams,
    /// Unperturbed upstream discharge.
    pub hydrograph: Hydrograph,
    pub rating_curve: RatingCurve,
    /// User-defined restart the first cycle starts from.
    pub initial: RiverState,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SolverError> {
        self.grid.validate()?;
        self.params.validate()?;
        self.initial.validate(&self.grid)
    }
}

/// States saved at the requested output times, plus the final state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<RiverState>,
    pub final_state: RiverState,
    /// Volume injected upstream over the run (m³).
    pub inflow_volume: f64,
    /// Volume released through the rating-curve boundary (m³).
    pub outflow_volume: f64,
    pub steps: usize,
}

impl Trajectory {
    /// Free-surface elevation at `cell` for every saved output.
    pub fn surface_series(&self, grid: &ScenarioGrid, cell: usize) -> Vec<(f64, f64)> {
        self.times
            .iter()
            .zip(&self.states)
            .map(|(&t, s)| (t, s.surface(grid, cell)))
            .collect()
    }

    pub fn state_at(&self, t: f64) -> Option<&RiverState> {
        self.times.iter().position(|&x| x == t).map(|k| &self.states[k])
    }

    pub fn t_start(&self) -> Option<f64> {
        self.times.first().copied()
    }
}

/// Integrate from `initial` (at `initial.t`) to `t_end`.
///
/// `output_times` must lie within `[initial.t, t_end]`; they are sorted and
/// deduplicated. Steps are shortened to land exactly on every output time.
#[allow(clippy::too_many_arguments)]
pub fn run(
    grid: &ScenarioGrid,
    params: &PhysicalParams,
    friction: &FrictionSet,
    inflow: &dyn Discharge,
    outflow: Option<&RatingCurve>,
    initial: &RiverState,
    t_end: f64,
    output_times: &[f64],
) -> Result<Trajectory, SolverError> {
    let t_start = initial.t;
    if !(t_end >= t_start) {
        return Err(SolverError::InvalidWindow(format!("t_end {t_end} precedes t_start {t_start}")));
    }
    let mut outputs: Vec<f64> = output_times.to_vec();
    outputs.sort_by(f64::total_cmp);
    outputs.dedup();
    if let Some(bad) = outputs.iter().find(|&&t| t < t_start || t > t_end) {
        return Err(SolverError::InvalidWindow(format!(
            "output time {bad} outside [{t_start}, {t_end}]"
        )));
    }

    let forcing = Forcing { inflow: Some(inflow), outflow };
    let mut solver = Solver::new(grid);
    let mut state = initial.clone();
    let mut times = Vec::with_capacity(outputs.len());
    let mut states = Vec::with_capacity(outputs.len());
    let mut inflow_volume = 0.0;
    let mut outflow_volume = 0.0;
    let mut steps = 0usize;
    let mut next = 0usize;

    while next < outputs.len() && outputs[next] <= state.t {
        times.push(outputs[next]);
        states.push(state.clone());
        next += 1;
    }
    while state.t < t_end {
        let target = outputs.get(next).copied().unwrap_or(t_end);
        let mut dt = stable_dt(&state, grid, params);
        let hits_target = state.t + dt >= target || target - (state.t + dt) < 1e-6 * dt;
        if hits_target {
            dt = target - state.t;
        }
        let fluxes = solver.step(&mut state, grid, friction, params, &forcing, dt)?;
        inflow_volume += fluxes.inflow * dt;
        outflow_volume += fluxes.outflow * dt;
        steps += 1;
        if hits_target {
            state.t = target;
            while next < outputs.len() && outputs[next] <= state.t {
                times.push(outputs[next]);
                states.push(state.clone());
                next += 1;
            }
        }
    }

    Ok(Trajectory { times, states, final_state: state, inflow_volume, outflow_volume, steps })
}
