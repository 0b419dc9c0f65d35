//! Observation bundle: gauge table, extent masks and the event timing they cover.

use std::path::{Path, PathBuf};

use floodlab::enkf::{GaugeObservationSet, ObsRecord};
use floodlab::io::{file_sha256, read_ascii_grid, read_gauges, write_ascii_grid, write_gauges, AssetRef, AsciiGrid};
use floodlab::metrics::FloodMask;
use floodlab::ScenarioGrid;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Excluded pixels are stored as NODATA; wet is 1, dry 0.
pub fn mask_to_grid(mask: &FloodMask, grid: &ScenarioGrid) -> AsciiGrid {
    let mut g = AsciiGrid::from_bools(mask.nx, mask.ny, grid.dx, grid.dy, &mask.wet);
    if let Some(ex) = &mask.exclusion {
        for (v, &e) in g.values.iter_mut().zip(ex) {
            if e {
                *v = g.nodata;
            }
        }
    }
    g
}

pub fn grid_to_mask(g: &AsciiGrid) -> FloodMask {
    let exclusion: Vec<bool> = g.values.iter().map(|&v| v == g.nodata).collect();
    let mask = FloodMask::new(g.ncols, g.nrows, g.to_bools());
    if exclusion.iter().any(|&e| e) {
        mask.with_exclusion(exclusion)
    } else {
        mask
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverpassRef {
    pub t: f64,
    pub mask: AssetRef,
}

/// `observations.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationManifest {
    /// Free-text origin of the products (never the generating controls).
    pub provenance: String,
    pub event_start: f64,
    pub event_end: f64,
    pub sampling_dt: f64,
    /// Constant-forcing warm-up applied before a free run.
    pub warmup: f64,
    pub gauges: AssetRef,
    pub overpasses: Vec<OverpassRef>,
}

/// Loaded observation bundle.
#[derive(Debug, Clone)]
pub struct Observations {
    pub manifest: ObservationManifest,
    pub gauges: Vec<ObsRecord>,
    pub extents: Vec<(f64, FloodMask)>,
    /// Every file read, with its hash.
    pub files: Vec<(PathBuf, String)>,
}

impl Observations {
    pub fn overpass_times(&self) -> Vec<f64> {
        self.extents.iter().map(|(t, _)| *t).collect()
    }

    pub fn gauge_set(&self, tau: f64) -> Result<GaugeObservationSet, CliError> {
        GaugeObservationSet::new(self.gauges.clone(), tau).map_err(CliError::runtime)
    }

    /// Sampling instants over the event.
    pub fn sampling_times(&self) -> Vec<f64> {
        let m = &self.manifest;
        let n = ((m.event_end - m.event_start) / m.sampling_dt).floor() as usize;
        (0..=n).map(|k| m.event_start + k as f64 * m.sampling_dt).collect()
    }
}

pub struct ObservationSpec<'a> {
    pub provenance: String,
    pub event_start: f64,
    pub event_end: f64,
    pub sampling_dt: f64,
    pub warmup: f64,
    pub gauges: &'a [ObsRecord],
    pub extents: &'a [(f64, FloodMask)],
}

fn asset(dir: &Path, rel: String) -> Result<AssetRef, CliError> {
    Ok(AssetRef { sha256: file_sha256(&dir.join(&rel))?, path: rel })
}

/// Write the bundle into `dir`; returns the manifest path.
pub fn write_observations(dir: &Path, spec: &ObservationSpec<'_>, grid: &ScenarioGrid) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_gauges(&dir.join("gauges.csv"), spec.gauges)?;
    let mut overpasses = Vec::new();
    for (t, mask) in spec.extents {
        let rel = format!("extent_{t}.asc");
        write_ascii_grid(&dir.join(&rel), &mask_to_grid(mask, grid))?;
        overpasses.push(OverpassRef { t: *t, mask: asset(dir, rel)? });
    }
    let manifest = ObservationManifest {
        provenance: spec.provenance.clone(),
        event_start: spec.event_start,
        event_end: spec.event_end,
        sampling_dt: spec.sampling_dt,
        warmup: spec.warmup,
        gauges: asset(dir, "gauges.csv".into())?,
        overpasses,
    };
    let path = dir.join("observations.toml");
    let text = toml::to_string_pretty(&manifest).map_err(CliError::runtime)?;
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

fn checked(dir: &Path, a: &AssetRef, files: &mut Vec<(PathBuf, String)>) -> Result<PathBuf, CliError> {
    let path = dir.join(&a.path);
    let found = file_sha256(&path)?;
    if found != a.sha256 {
        return Err(CliError::runtime(format!(
            "{}: content hash {found} does not match manifest ({})",
            path.display(),
            a.sha256
        )));
    }
    files.push((path.clone(), found));
    Ok(path)
}

pub fn load_observations(path: &Path) -> Result<Observations, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let manifest: ObservationManifest =
        toml::from_str(&text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    if !(manifest.event_end > manifest.event_start && manifest.sampling_dt > 0.0 && manifest.warmup >= 0.0) {
        return Err(CliError::runtime(format!("{}: inconsistent event timing", path.display())));
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut files = vec![(path.to_path_buf(), file_sha256(path)?)];
    let gauges = read_gauges(&checked(dir, &manifest.gauges, &mut files)?)?;
    let extents = manifest
        .overpasses
        .iter()
        .map(|o| {
            let g = read_ascii_grid(&checked(dir, &o.mask, &mut files)?)?;
            Ok((o.t, grid_to_mask(&g)))
        })
        .collect::<Result<_, CliError>>()?;
    Ok(Observations { manifest, gauges, extents, files })
}
