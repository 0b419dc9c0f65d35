use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ascii::{read_ascii_grid, write_ascii_grid, AsciiGrid};
use super::restart::{read_restart, write_restart};
use super::tables::{read_hydrograph, read_rating_curve, write_hydrograph, write_rating_curve};
use super::{ensure_parent, file_err, file_sha256, parse_err, IoError};
use crate::swe::{PhysicalParams, Scenario, ScenarioGrid, Station};

/// Relative path to an asset plus the SHA-256 of its content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetRef {
    pub path: String,
    pub sha256: String,
}

/// Grid cell as `[i, j]`.
pub type CellRef = [usize; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationRef {
    pub name: String,
    pub i: usize,
    pub j: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicsSection {
    pub g: f64,
    pub h_dry: f64,
    pub nu_e: f64,
    pub cfl: f64,
    pub dt_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSection {
    pub bathymetry: AssetRef,
    pub friction_zones: AssetRef,
    pub exclusion: AssetRef,
    pub upstream_cells: Vec<CellRef>,
    pub downstream_cells: Vec<CellRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingSection {
    pub hydrograph: AssetRef,
    pub rating_curve: AssetRef,
    pub initial_state: AssetRef,
}

/// Structured-text description of a scenario and its assets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioManifest {
    pub name: String,
    pub physics: PhysicsSection,
    pub grid: GridSection,
    pub stations: Vec<StationRef>,
    pub forcing: ForcingSection,
}

fn asset(dir: &Path, rel: &str) -> Result<AssetRef, IoError> {
    Ok(AssetRef { path: rel.to_string(), sha256: file_sha256(&dir.join(rel))? })
}

fn checked(dir: &Path, a: &AssetRef) -> Result<PathBuf, IoError> {
    let path = dir.join(&a.path);
    let found = file_sha256(&path)?;
    if found != a.sha256 {
        return Err(IoError::HashMismatch { path, expected: a.sha256.clone(), found });
    }
    Ok(path)
}

/// Write the scenario's assets into `dir` and a `scenario.toml` referencing them.
pub fn save_scenario(dir: &Path, name: &str, scenario: &Scenario) -> Result<PathBuf, IoError> {
    let g = &scenario.grid;
    let cell = |k: usize| -> CellRef {
        let (i, j) = g.ij(k);
        [i, j]
    };
    std::fs::create_dir_all(dir).map_err(file_err(dir))?;
    write_ascii_grid(&dir.join("bathymetry.asc"), &AsciiGrid::new(g.nx, g.ny, g.dx, g.dy, g.z_b.clone()))?;
    let zones = g.friction_zone_id.iter().map(|&z| f64::from(z)).collect();
    write_ascii_grid(&dir.join("friction_zones.asc"), &AsciiGrid::new(g.nx, g.ny, g.dx, g.dy, zones))?;
    write_ascii_grid(&dir.join("exclusion.asc"), &AsciiGrid::from_bools(g.nx, g.ny, g.dx, g.dy, &g.exclusion))?;
    write_hydrograph(&dir.join("hydrograph.csv"), &scenario.hydrograph)?;
    write_rating_curve(&dir.join("rating_curve.csv"), &scenario.rating_curve)?;
    write_restart(&dir.join("initial.restart"), &scenario.initial, g)?;

    let p = &scenario.params;
    let manifest = ScenarioManifest {
        name: name.to_string(),
        physics: PhysicsSection { g: p.g, h_dry: p.h_dry, nu_e: p.nu_e, cfl: p.cfl, dt_max: p.dt_max },
        grid: GridSection {
            bathymetry: asset(dir, "bathymetry.asc")?,
            friction_zones: asset(dir, "friction_zones.asc")?,
            exclusion: asset(dir, "exclusion.asc")?,
            upstream_cells: g.upstream_cells.iter().map(|&k| cell(k)).collect(),
            downstream_cells: g.downstream_cells.iter().map(|&k| cell(k)).collect(),
        },
        stations: g
            .station_cells
            .iter()
            .map(|s| {
                let [i, j] = cell(s.cell);
                StationRef { name: s.name.clone(), i, j }
            })
            .collect(),
        forcing: ForcingSection {
            hydrograph: asset(dir, "hydrograph.csv")?,
            rating_curve: asset(dir, "rating_curve.csv")?,
            initial_state: asset(dir, "initial.restart")?,
        },
    };
    let path = dir.join("scenario.toml");
    let text = toml::to_string_pretty(&manifest).map_err(|e| parse_err(&path, e.to_string()))?;
    ensure_parent(&path)?;
    std::fs::write(&path, text).map_err(file_err(&path))?;
    Ok(path)
}

/// Load a scenario manifest, verifying every asset hash.
pub fn load_scenario(manifest_path: &Path) -> Result<(Scenario, ScenarioManifest), IoError> {
    let text = std::fs::read_to_string(manifest_path).map_err(file_err(manifest_path))?;
    let m: ScenarioManifest = toml::from_str(&text).map_err(|e| parse_err(manifest_path, e.to_string()))?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));

    let bathy = read_ascii_grid(&checked(dir, &m.grid.bathymetry)?)?;
    let zones = read_ascii_grid(&checked(dir, &m.grid.friction_zones)?)?;
    let excl = read_ascii_grid(&checked(dir, &m.grid.exclusion)?)?;
    for r in [&zones, &excl] {
        if (r.ncols, r.nrows) != (bathy.ncols, bathy.nrows) {
            return Err(IoError::Invalid("rasters have different dimensions".into()));
        }
    }
    let (nx, ny) = (bathy.ncols, bathy.nrows);
    let idx = |c: &CellRef| -> Result<usize, IoError> {
        if c[0] >= nx || c[1] >= ny {
            return Err(IoError::Invalid(format!("cell {c:?} outside {nx}x{ny} grid")));
        }
        Ok(c[1] * nx + c[0])
    };
    let mut grid = ScenarioGrid::flat(nx, ny, bathy.dx, bathy.dy, 0.0);
    grid.z_b = bathy.values;
    grid.friction_zone_id = zones.values.iter().map(|&z| z as u8).collect();
    grid.exclusion = excl.to_bools();
    grid.upstream_cells = m.grid.upstream_cells.iter().map(idx).collect::<Result<_, _>>()?;
    grid.downstream_cells = m.grid.downstream_cells.iter().map(idx).collect::<Result<_, _>>()?;
    grid.station_cells = m
        .stations
        .iter()
        .map(|s| Ok(Station { name: s.name.clone(), cell: idx(&[s.i, s.j])? }))
        .collect::<Result<_, IoError>>()?;
    grid.validate().map_err(|e| IoError::Invalid(e.to_string()))?;

    let p = &m.physics;
    let scenario = Scenario {
        params: PhysicalParams { g: p.g, h_dry: p.h_dry, nu_e: p.nu_e, cfl: p.cfl, dt_max: p.dt_max },
        hydrograph: read_hydrograph(&checked(dir, &m.forcing.hydrograph)?)?,
        rating_curve: read_rating_curve(&checked(dir, &m.forcing.rating_curve)?)?,
        initial: read_restart(&checked(dir, &m.forcing.initial_state)?, &grid)?,
        grid,
    };
    scenario.validate().map_err(|e| IoError::Invalid(e.to_string()))?;
    Ok((scenario, m))
}
