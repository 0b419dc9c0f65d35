//! On-disk formats: ESRI ASCII grids, CSV tables, restart dumps and scenario manifests.

mod ascii;
mod manifest;
mod restart;
mod tables;

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use ascii::{read_ascii_grid, write_ascii_grid, AsciiGrid};
pub use manifest::{load_scenario, save_scenario, AssetRef, CellRef, ScenarioManifest, StationRef};
pub use restart::{read_restart, write_restart};
pub use tables::{
    read_bias, read_controls, read_forecast, read_gauges, read_hydrograph, read_rating_curve,
    read_scores, read_station_series, write_bias, write_controls, write_forecast, write_gain,
    write_gauges, write_hydrograph, write_innovations, write_rating_curve, write_scores,
    write_station_series, ControlRow, ScoreRow,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: content hash {found} does not match manifest ({expected})")]
    HashMismatch { path: PathBuf, expected: String, found: String },
    #[error("restart {path} was written for grid {found}, expected {expected}")]
    GridMismatch { path: PathBuf, expected: String, found: String },
    #[error("invalid data: {0}")]
    Invalid(String),
}

pub(crate) fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File { path: path.to_path_buf(), source }
}

pub(crate) fn parse_err(path: &Path, msg: impl Into<String>) -> IoError {
    IoError::Parse { path: path.to_path_buf(), msg: msg.into() }
}

/// Hex SHA-256 of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hex SHA-256 of a file's content.
pub fn file_sha256(path: &Path) -> Result<String, IoError> {
    let bytes = std::fs::read(path).map_err(file_err(path))?;
    Ok(sha256_hex(&bytes))
}

pub(crate) fn ensure_parent(path: &Path) -> Result<(), IoError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(file_err(dir))?;
        }
    }
    Ok(())
}
