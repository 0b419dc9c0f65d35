//! Cycled stochastic ensemble Kalman filter over the 7-scalar control vector.

mod analysis;
mod cycle;
mod obs;

use thiserror::Error;

use crate::swe::SolverError;
use crate::uncertainty::UncertaintyError;

pub use analysis::{analysis, anomalies, AnalysisOutput, CovarianceNormalization};
pub use cycle::{
    apply_bias, controls_matrix, forecast, mean_state, propagate, run_assimilation, run_cycle,
    AnalysisRecord, AssimilationRun, CycleOutput, CycleStart, CycleWindow, DaContext, EnkfConfig,
    ForecastRow,
};
pub use obs::{
    estimate_bias, observe, observe_series, perturb_observations, station_series, BiasTable,
    GaugeObservationSet, ObsRecord, StationSeries, TimeSeries,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnkfError {
    #[error("ensemble needs at least 2 members, got {0}")]
    TooFewMembers(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("P_yy + R is not positive definite; use a strictly positive observation error (tau > 0)")]
    SingularInnovationCovariance,
    #[error("observation at station {station}, t={t} s lies outside the model output range")]
    ObservationOutsideTrajectory { station: String, t: f64 },
    #[error("unknown station {0}")]
    UnknownStation(String),
    #[error("no observations in [{t0}, {t1}]")]
    NoObservations { t0: f64, t1: f64 },
    #[error("invalid observations: {0}")]
    InvalidObservations(String),
    #[error("invalid cycle window: {0}")]
    InvalidWindow(String),
    #[error("member {member} restart is at t={found} s, expected {expected} s")]
    RestartTime { member: usize, expected: f64, found: f64 },
    #[error("cycle {cycle}, member {member}: {source}")]
    MemberFailed {
        cycle: usize,
        member: usize,
        #[source]
        source: SolverError,
    },
    #[error(transparent)]
    Sampling(#[from] UncertaintyError),
    #[error("{0}")]
    Io(String),
}
