use super::grid::{ScenarioGrid, N_ZONES};
use super::SolverError;

/// Water depth and depth-averaged velocity on every cell at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiverState {
    pub t: f64,
    pub h: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl RiverState {
    pub fn dry(n: usize, t: f64) -> Self {
        Self { t, h: vec![0.0; n], u: vec![0.0; n], v: vec![0.0; n] }
    }

    /// Still water at free-surface elevation `level` (dry where the bed is higher).
    pub fn lake(grid: &ScenarioGrid, level: f64, t: f64) -> Self {
        let h = grid.z_b.iter().map(|z| (level - z).max(0.0)).collect();
        Self { t, h, u: vec![0.0; grid.len()], v: vec![0.0; grid.len()] }
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// Free-surface elevation `z_b + h` at a cell.
    #[inline]
    pub fn surface(&self, grid: &ScenarioGrid, idx: usize) -> f64 {
        grid.z_b[idx] + self.h[idx]
    }

    pub fn volume(&self, grid: &ScenarioGrid) -> f64 {
        self.h.iter().sum::<f64>() * grid.cell_area()
    }

    pub fn kinetic_energy(&self, grid: &ScenarioGrid) -> f64 {
        let e: f64 = (0..self.len())
            .map(|k| 0.5 * self.h[k] * (self.u[k] * self.u[k] + self.v[k] * self.v[k]))
            .sum();
        e * grid.cell_area()
    }

    /// Kinetic plus potential energy, `Σ (h|u|²/2 + g h (z_b + h/2)) dA`.
    pub fn total_energy(&self, grid: &ScenarioGrid, g: f64) -> f64 {
        let pe: f64 =
            (0..self.len()).map(|k| g * self.h[k] * (grid.z_b[k] + 0.5 * self.h[k])).sum();
        self.kinetic_energy(grid) + pe * grid.cell_area()
    }

    pub fn validate(&self, grid: &ScenarioGrid) -> Result<(), SolverError> {
        if self.h.len() != grid.len() || self.u.len() != grid.len() || self.v.len() != grid.len()
        {
            return Err(SolverError::InvalidState("state size does not match grid".into()));
        }
        for k in 0..self.len() {
            if !(self.h[k] >= 0.0 && self.h[k].is_finite()) {
                return Err(SolverError::InvalidState(format!("bad depth {} at cell {k}", self.h[k])));
            }
            if !(self.u[k].is_finite() && self.v[k].is_finite()) {
                return Err(SolverError::InvalidState(format!("non-finite velocity at cell {k}")));
            }
        }
        Ok(())
    }
}

/// Numerical and physical constants of the solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    pub g: f64,
    /// Below this depth a cell is treated as dry and its velocity zeroed.
    pub h_dry: f64,
    /// Constant eddy viscosity (m²/s); zero disables diffusion.
    pub nu_e: f64,
    pub cfl: f64,
    pub dt_max: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        // cfl = 0.45 keeps the 2D Rusanov update positivity-preserving
        Self { g: 9.81, h_dry: 1e-4, nu_e: 0.0, cfl: 0.45, dt_max: 60.0 }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.g > 0.0) {
            return Err(SolverError::InvalidParams("g must be positive".into()));
        }
        if !(self.h_dry > 0.0) {
            return Err(SolverError::InvalidParams("h_dry must be positive".into()));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(SolverError::InvalidParams("cfl must lie in (0, 1]".into()));
        }
        if !(self.nu_e >= 0.0) {
            return Err(SolverError::InvalidParams("nu_e must be non-negative".into()));
        }
        if !(self.dt_max > 0.0) {
            return Err(SolverError::InvalidParams("dt_max must be positive".into()));
        }
        Ok(())
    }
}

/// Strickler coefficients (m^(1/3)/s) indexed by friction zone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrictionSet {
    pub ks: [f64; N_ZONES],
}

impl FrictionSet {
    pub fn new(ks: [f64; N_ZONES]) -> Result<Self, SolverError> {
        if ks.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
            return Err(SolverError::InvalidParams(format!(
                "Strickler coefficients must be positive, got {ks:?}"
            )));
        }
        Ok(Self { ks })
    }

    pub fn uniform(ks: f64) -> Self {
        Self { ks: [ks; N_ZONES] }
    }
}
