use sha2::{Digest, Sha256};

use super::SolverError;

/// Number of friction zones: floodplain (0) plus three river-bed reaches.
pub const N_ZONES: usize = 4;

/// A named gauge located at one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Station {
    pub name: String,
    pub cell: usize,
}

/// Which outer face of a boundary cell carries the outflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    West,
    East,
    South,
    North,
}

/// Structured rectangular grid with bathymetry, friction zoning and boundary cells.
///
/// Cells are stored row-major with `j` (south to north) as the slow index:
/// `idx = j * nx + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioGrid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    /// Bottom elevation per cell (m).
    pub z_b: Vec<f64>,
    pub friction_zone_id: Vec<u8>,
    /// Cells whose observations are considered unreliable.
    pub exclusion: Vec<bool>,
    pub station_cells: Vec<Station>,
    pub upstream_cells: Vec<usize>,
    pub downstream_cells: Vec<usize>,
}

impl ScenarioGrid {
    /// Flat grid, zone 0 everywhere, no stations and no open boundaries.
    pub fn flat(nx: usize, ny: usize, dx: f64, dy: f64, z: f64) -> Self {
        let n = nx * ny;
        Self {
            nx,
            ny,
            dx,
            dy,
            z_b: vec![z; n],
            friction_zone_id: vec![0; n],
            exclusion: vec![false; n],
            station_cells: Vec::new(),
            upstream_cells: Vec::new(),
            downstream_cells: Vec::new(),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn is_interior(&self, idx: usize) -> bool {
        let (i, j) = self.ij(idx);
        let interior_x = self.nx < 3 || (i > 0 && i + 1 < self.nx);
        let interior_y = self.ny < 3 || (j > 0 && j + 1 < self.ny);
        interior_x && interior_y
    }

    /// Outer face through which a downstream cell discharges (east preferred).
    pub fn outflow_side(&self, idx: usize) -> Option<Side> {
        let (i, j) = self.ij(idx);
        if i + 1 == self.nx {
            Some(Side::East)
        } else if i == 0 {
            Some(Side::West)
        } else if j + 1 == self.ny {
            Some(Side::North)
        } else if j == 0 {
            Some(Side::South)
        } else {
            None
        }
    }

    pub fn station(&self, name: &str) -> Option<&Station> {
        self.station_cells.iter().find(|s| s.name == name)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let invalid = |msg: String| Err(SolverError::InvalidGrid(msg));
        let n = self.len();
        if n == 0 {
            return invalid("grid has no cells".into());
        }
        if !(self.dx > 0.0 && self.dy > 0.0) {
            return invalid(format!("cell size must be positive (dx={}, dy={})", self.dx, self.dy));
        }
        if self.z_b.len() != n || self.friction_zone_id.len() != n || self.exclusion.len() != n {
            return invalid("per-cell arrays do not match nx*ny".into());
        }
        if let Some(k) = self.z_b.iter().position(|z| !z.is_finite()) {
            return invalid(format!("non-finite bottom elevation at cell {k}"));
        }
        if let Some(k) = self.friction_zone_id.iter().position(|&z| z as usize >= N_ZONES) {
            return invalid(format!("friction zone out of range at cell {k}"));
        }
        for s in &self.station_cells {
            if s.cell >= n || !self.is_interior(s.cell) {
                return invalid(format!("station {} is not an interior cell", s.name));
            }
        }
        if let Some(&k) = self.upstream_cells.iter().find(|&&k| k >= n) {
            return invalid(format!("upstream cell {k} out of range"));
        }
        for &k in &self.downstream_cells {
            if k >= n || self.outflow_side(k).is_none() {
                return invalid(format!("downstream cell {k} is not on the domain edge"));
            }
        }
        Ok(())
    }

    /// Checksum over the geometry, used to tie restart files to their grid.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.nx as u64).to_le_bytes());
        hasher.update((self.ny as u64).to_le_bytes());
        hasher.update(self.dx.to_le_bytes());
        hasher.update(self.dy.to_le_bytes());
        for z in &self.z_b {
            hasher.update(z.to_le_bytes());
        }
        hasher.update(&self.friction_zone_id);
        hex::encode(&hasher.finalize()[..16])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip() {
        let g = ScenarioGrid::flat(7, 3, 1.0, 1.0, 0.0);
        for k in 0..g.len() {
            let (i, j) = g.ij(k);
            assert_eq!(g.idx(i, j), k);
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        let mut g = ScenarioGrid::flat(4, 4, 1.0, 1.0, 0.0);
        g.dx = 0.0;
        assert!(g.validate().is_err());
        let mut g = ScenarioGrid::flat(4, 4, 1.0, 1.0, 0.0);
        g.z_b[3] = f64::NAN;
        assert!(g.validate().is_err());
        let mut g = ScenarioGrid::flat(4, 4, 1.0, 1.0, 0.0);
        g.friction_zone_id[0] = 4;
        assert!(g.validate().is_err());
    }

    #[test]
    fn stations_must_be_interior() {
        let mut g = ScenarioGrid::flat(5, 5, 1.0, 1.0, 0.0);
        g.station_cells.push(Station { name: "edge".into(), cell: 0 });
        assert!(g.validate().is_err());
        g.station_cells[0].cell = g.idx(2, 2);
        assert!(g.validate().is_ok());
    }

    #[test]
    fn checksum_tracks_bathymetry() {
        let a = ScenarioGrid::flat(5, 5, 1.0, 1.0, 0.0);
        let mut b = a.clone();
        assert_eq!(a.checksum(), b.checksum());
        b.z_b[7] = 0.5;
        assert_ne!(a.checksum(), b.checksum());
    }
}
