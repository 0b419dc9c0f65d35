//! Desk-scale flood simulation and ensemble data assimilation.
//!
//! The crate is organised around five pieces:
//!
//! - [`swe`]: explicit finite-volume shallow-water solver with Strickler friction,
//!   wetting/drying, hydrograph inflow and rating-curve outflow.
//! - [`uncertainty`]: the 7-scalar control vector, its Gaussian prior and the
//!   parametric inflow perturbation `Q'(t) = a Q(t - c) + b`.
//! - [`enkf`]: cycled stochastic ensemble Kalman filter over the control vector.
//! - [`metrics`]: station skill scores and flood-extent contingency scores.
//! - [`twinlab`]: default twin scenario, hidden truth runs and synthetic observations.
//!
//! [`io`] holds the on-disk formats (ESRI ASCII grids, CSV tables, restart dumps,
//! scenario manifests) and [`seeding`] derives reproducible random streams.

pub mod enkf;
pub mod io;
pub mod metrics;
pub mod seeding;
pub mod swe;
pub mod twinlab;
pub mod uncertainty;

pub use enkf::{AnalysisRecord, CycleWindow, EnkfConfig, GaugeObservationSet};
pub use metrics::{ContingencyCounts, FloodMask, SeriesPair};
pub use swe::{
    FrictionSet, Hydrograph, PhysicalParams, RatingCurve, RiverState, Scenario, ScenarioGrid,
    Trajectory,
};
pub use uncertainty::{ControlPrior, ControlVector, Ensemble};
