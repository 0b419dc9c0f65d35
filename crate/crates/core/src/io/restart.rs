use std::fmt::Write as _;
use std::path::Path;

use super::{ensure_parent, file_err, parse_err, IoError};
use crate::swe::{RiverState, ScenarioGrid};

const MAGIC: &str = "floodlab-restart 1";

/// Text dump of a state; floats use shortest round-trip formatting so the
/// reload is bit-exact.
pub fn write_restart(path: &Path, state: &RiverState, grid: &ScenarioGrid) -> Result<(), IoError> {
    ensure_parent(path)?;
    let mut s = String::with_capacity(state.len() * 48);
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "grid {}", grid.checksum());
    let _ = writeln!(s, "t {}", state.t);
    let _ = writeln!(s, "cells {}", state.len());
    for k in 0..state.len() {
        let _ = writeln!(s, "{} {} {}", state.h[k], state.u[k], state.v[k]);
    }
    std::fs::write(path, s).map_err(file_err(path))
}

/// Load a restart, refusing it if it was written for another grid.
pub fn read_restart(path: &Path, grid: &ScenarioGrid) -> Result<RiverState, IoError> {
    let text = std::fs::read_to_string(path).map_err(file_err(path))?;
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(parse_err(path, "not a restart file"));
    }
    let mut field = |key: &str| -> Result<String, IoError> {
        let line = lines.next().ok_or_else(|| parse_err(path, format!("missing {key}")))?;
        line.strip_prefix(key)
            .map(|v| v.trim().to_string())
            .ok_or_else(|| parse_err(path, format!("expected {key}, got {line:?}")))
    };
    let checksum = field("grid")?;
    let t: f64 = field("t")?.parse().map_err(|_| parse_err(path, "bad time"))?;
    let n: usize = field("cells")?.parse().map_err(|_| parse_err(path, "bad cell count"))?;
    let expected = grid.checksum();
    if checksum != expected {
        return Err(IoError::GridMismatch { path: path.to_path_buf(), expected, found: checksum });
    }
    if n != grid.len() {
        return Err(parse_err(path, format!("{n} cells for a grid of {}", grid.len())));
    }
    let mut state = RiverState::dry(n, t);
    for k in 0..n {
        let line = lines.next().ok_or_else(|| parse_err(path, format!("truncated at cell {k}")))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| parse_err(path, format!("bad values at cell {k}")))?;
        if vals.len() != 3 {
            return Err(parse_err(path, format!("cell {k}: expected h u v")));
        }
        state.h[k] = vals[0];
        state.u[k] = vals[1];
        state.v[k] = vals[2];
    }
    Ok(state)
}
