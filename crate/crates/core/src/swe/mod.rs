//! Two-dimensional shallow-water solver on a structured grid.

mod boundary;
mod grid;
mod run;
mod solver;
mod state;

use thiserror::Error;

pub use boundary::{rating_curve_eval, Discharge, Hydrograph, RatingCurve};
pub use grid::{ScenarioGrid, Side, Station, N_ZONES};
pub use run::{run, Scenario, Trajectory};
pub use solver::{friction_source, stable_dt, step, BoundaryFluxes, Forcing, Solver};
pub use state::{FrictionSet, PhysicalParams, RiverState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid boundary table: {0}")]
    InvalidBoundary(String),
    #[error("invalid run window: {0}")]
    InvalidWindow(String),
    #[error("solver instability at cell {cell} (i={i}, j={j}), t={t} s")]
    Instability { cell: usize, i: usize, j: usize, t: f64 },
}
