//! Twin-experiment orchestration: truth generation, free runs, cycled
//! assimilation, bias diagnosis and scoring, all driven from files.

pub mod config;
pub mod experiment;
pub mod observations;
pub mod score;
pub mod truth;

use std::fmt::Display;
use std::path::{Path, PathBuf};

use floodlab::enkf::EnkfError;
use floodlab::io::IoError;
use floodlab::metrics::MetricError;
use floodlab::swe::SolverError;
use floodlab::twinlab::TwinError;
use thiserror::Error;

pub use config::{ExperimentConfig, Mode};
pub use experiment::{diagnose_bias, run_experiment, RunManifest, RunOptions};
pub use observations::{load_observations, write_observations, ObservationManifest, Observations};
pub use score::score_experiment;
pub use truth::{generate_truth, TruthPaths};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Enkf(#[from] EnkfError),
    #[error(transparent)]
    Twin(#[from] TwinError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn runtime(e: impl Display) -> Self {
        Self::Runtime(e.to_string())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::File { path: path.to_path_buf(), source }
    }

    /// 1 for usage and configuration problems, 2 for everything that fails while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            _ => 2,
        }
    }
}
