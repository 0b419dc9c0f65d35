//! First-order finite-volume update.
//!
//! Interface fluxes use the Rusanov (local Lax-Friedrichs) flux on states
//! rebuilt by hydrostatic reconstruction, which keeps still water over uneven
//! bathymetry exactly at rest and preserves `h >= 0` under the CFL limit.
//! The hydrostatic pressure `g h_i^2 / 2` of a cell appears on both of its
//! faces in each direction and cancels, so only the remainder `B` of each
//! face flux is accumulated. Friction is applied point-implicitly after the
//! flux update.

use super::boundary::{Discharge, RatingCurve};
use super::grid::{ScenarioGrid, Side};
use super::state::{FrictionSet, PhysicalParams, RiverState};
use super::SolverError;

/// Open-boundary forcing for one step.
#[derive(Clone, Copy, Default)]
pub struct Forcing<'a> {
    pub inflow: Option<&'a dyn Discharge>,
    pub outflow: Option<&'a RatingCurve>,
}

impl<'a> Forcing<'a> {
    pub fn closed() -> Self {
        Self::default()
    }

    pub fn new(inflow: &'a dyn Discharge, outflow: &'a RatingCurve) -> Self {
        Self { inflow: Some(inflow), outflow: Some(outflow) }
    }
}

/// Boundary discharges applied during a step (m³/s).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BoundaryFluxes {
    pub inflow: f64,
    pub outflow: f64,
}

/// Strickler friction acceleration `(fx, fy)` in m/s².
///
/// Returns zero on dry cells (`h < h_dry`).
pub fn friction_source(h: f64, u: f64, v: f64, ks: f64, params: &PhysicalParams) -> (f64, f64) {
    if h < params.h_dry {
        return (0.0, 0.0);
    }
    let speed = (u * u + v * v).sqrt();
    let coef = params.g / (ks * ks) * speed / (h * h.cbrt());
    (-coef * u, -coef * v)
}

/// Largest stable explicit time step for `state`.
pub fn stable_dt(state: &RiverState, grid: &ScenarioGrid, params: &PhysicalParams) -> f64 {
    let mut max_speed = 0.0f64;
    for k in 0..state.len() {
        let h = state.h[k];
        if h < params.h_dry {
            continue;
        }
        let s = (state.u[k] * state.u[k] + state.v[k] * state.v[k]).sqrt() + (params.g * h).sqrt();
        max_speed = max_speed.max(s);
    }
    let dmin = grid.dx.min(grid.dy);
    let mut dt = params.dt_max;
    if max_speed > 0.0 {
        dt = dt.min(params.cfl * dmin / max_speed);
    }
    if params.nu_e > 0.0 {
        dt = dt.min(0.25 * dmin * dmin / params.nu_e);
    }
    dt
}

/// Face flux remainder after removing the cells' own hydrostatic pressure.
///
/// Inputs are the left/right depth, normal and tangential velocity and bed.
/// Returns `(mass, normal momentum seen by left, normal momentum seen by right, tangential)`.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn face_flux(
    g: f64,
    hl: f64,
    unl: f64,
    utl: f64,
    zl: f64,
    hr: f64,
    unr: f64,
    utr: f64,
    zr: f64,
) -> (f64, f64, f64, f64) {
    let zs = zl.max(zr);
    let hls = (hl + zl - zs).max(0.0);
    let hrs = (hr + zr - zs).max(0.0);
    if hls == 0.0 && hrs == 0.0 {
        // both sides see a wall; the pressure terms are the cells' own and cancel
        return (0.0, 0.0, 0.0, 0.0);
    }
    let a = (unl.abs() + (g * hls).sqrt()).max(unr.abs() + (g * hrs).sqrt());
    let ql = hls * unl;
    let qr = hrs * unr;
    let mass = 0.5 * (ql + qr) - 0.5 * a * (hrs - hls);
    let dynamic = 0.5 * (ql * unl + qr * unr) - 0.5 * a * (qr - ql);
    let pressure = 0.25 * g * (hrs * hrs - hls * hls);
    let tang = 0.5 * (ql * utl + qr * utr) - 0.5 * a * (hrs * utr - hls * utl);
    (mass, dynamic + pressure, dynamic - pressure, tang)
}

/// Reusable work arrays for [`Solver::step`].
#[derive(Debug, Clone)]
pub struct Solver {
    dh: Vec<f64>,
    dqx: Vec<f64>,
    dqy: Vec<f64>,
    friction_coef: Vec<f64>,
    cached_ks: Option<[f64; 4]>,
}

impl Solver {
    pub fn new(grid: &ScenarioGrid) -> Self {
        let n = grid.len();
        Self {
            dh: vec![0.0; n],
            dqx: vec![0.0; n],
            dqy: vec![0.0; n],
            friction_coef: vec![0.0; n],
            cached_ks: None,
        }
    }

    fn refresh_friction(&mut self, grid: &ScenarioGrid, friction: &FrictionSet, g: f64) {
        if self.cached_ks == Some(friction.ks) && self.friction_coef.len() == grid.len() {
            return;
        }
        self.friction_coef.resize(grid.len(), 0.0);
        for (c, &zone) in self.friction_coef.iter_mut().zip(&grid.friction_zone_id) {
            let ks = friction.ks[zone as usize];
            *c = g / (ks * ks);
        }
        self.cached_ks = Some(friction.ks);
    }

    /// Advance `state` in place by `dt`.
    pub fn step(
        &mut self,
        state: &mut RiverState,
        grid: &ScenarioGrid,
        friction: &FrictionSet,
        params: &PhysicalParams,
        forcing: &Forcing<'_>,
        dt: f64,
    ) -> Result<BoundaryFluxes, SolverError> {
        let (nx, ny) = (grid.nx, grid.ny);
        let g = params.g;
        let (dx, dy) = (grid.dx, grid.dy);
        self.refresh_friction(grid, friction, g);
        self.dh.iter_mut().for_each(|x| *x = 0.0);
        self.dqx.iter_mut().for_each(|x| *x = 0.0);
        self.dqy.iter_mut().for_each(|x| *x = 0.0);

        let h = &state.h;
        let u = &state.u;
        let v = &state.v;
        let z = &grid.z_b;
        let inv_dx = 1.0 / dx;
        let inv_dy = 1.0 / dy;

        // x-direction interior faces
        for j in 0..ny {
            let row = j * nx;
            for i in 0..nx.saturating_sub(1) {
                let l = row + i;
                let r = l + 1;
                let (fm, bl, br, ft) = face_flux(g, h[l], u[l], v[l], z[l], h[r], u[r], v[r], z[r]);
                self.dh[l] -= fm * inv_dx;
                self.dh[r] += fm * inv_dx;
                self.dqx[l] -= bl * inv_dx;
                self.dqx[r] += br * inv_dx;
                self.dqy[l] -= ft * inv_dx;
                self.dqy[r] += ft * inv_dx;
            }
        }
        // y-direction interior faces
        for j in 0..ny.saturating_sub(1) {
            for i in 0..nx {
                let l = j * nx + i;
                let r = l + nx;
                let (fm, bl, br, ft) = face_flux(g, h[l], v[l], u[l], z[l], h[r], v[r], u[r], z[r]);
                self.dh[l] -= fm * inv_dy;
                self.dh[r] += fm * inv_dy;
                self.dqy[l] -= bl * inv_dy;
                self.dqy[r] += br * inv_dy;
                self.dqx[l] -= ft * inv_dy;
                self.dqx[r] += ft * inv_dy;
            }
        }

        if params.nu_e > 0.0 {
            self.add_diffusion(state, grid, params);
        }

        // Outer walls: mirror ghost state, only the dynamic part remains.
        let outflow_face = self.outflow_faces(state, grid, params, forcing, dt);
        let mut outflow_total = 0.0;
        let wall = |hk: f64, un: f64| -> f64 {
            if hk < params.h_dry {
                0.0
            } else {
                let a = un.abs() + (g * hk).sqrt();
                hk * un * un + a * hk * un
            }
        };
        for j in 0..ny {
            let west = j * nx;
            let east = j * nx + nx - 1;
            // ghost on the left: the cell receives +B with B = h u^2 - a h u
            if !outflow_face.contains(west, Side::West) {
                self.dqx[west] += wall(h[west], -u[west]) * inv_dx;
            }
            if !outflow_face.contains(east, Side::East) {
                self.dqx[east] -= wall(h[east], u[east]) * inv_dx;
            }
        }
        for i in 0..nx {
            let south = i;
            let north = (ny - 1) * nx + i;
            if !outflow_face.contains(south, Side::South) {
                self.dqy[south] += wall(h[south], -v[south]) * inv_dy;
            }
            if !outflow_face.contains(north, Side::North) {
                self.dqy[north] -= wall(h[north], v[north]) * inv_dy;
            }
        }
        for &(k, side, q) in &outflow_face.faces {
            // q is outward discharge per unit face length
            let hk = h[k].max(params.h_dry);
            let mom = q * q / hk;
            match side {
                Side::East => {
                    self.dh[k] -= q * inv_dx;
                    self.dqx[k] -= mom * inv_dx;
                    self.dqy[k] -= q * v[k] * inv_dx;
                    outflow_total += q * dy;
                }
                Side::West => {
                    self.dh[k] -= q * inv_dx;
                    self.dqx[k] += mom * inv_dx;
                    self.dqy[k] -= q * v[k] * inv_dx;
                    outflow_total += q * dy;
                }
                Side::North => {
                    self.dh[k] -= q * inv_dy;
                    self.dqy[k] -= mom * inv_dy;
                    self.dqx[k] -= q * u[k] * inv_dy;
                    outflow_total += q * dx;
                }
                Side::South => {
                    self.dh[k] -= q * inv_dy;
                    self.dqy[k] += mom * inv_dy;
                    self.dqx[k] -= q * u[k] * inv_dy;
                    outflow_total += q * dx;
                }
            }
        }

        let mut inflow_total = 0.0;
        if let Some(inflow) = forcing.inflow {
            if !grid.upstream_cells.is_empty() {
                let q = inflow.discharge(state.t).max(0.0);
                let per_cell = q / (grid.upstream_cells.len() as f64 * grid.cell_area());
                for &k in &grid.upstream_cells {
                    self.dh[k] += per_cell;
                }
                inflow_total = q;
            }
        }

        // Update, friction, wet/dry.
        let t_new = state.t + dt;
        for k in 0..grid.len() {
            let h_old = state.h[k];
            let mut hn = h_old + dt * self.dh[k];
            let mut qx = h_old * state.u[k] + dt * self.dqx[k];
            let mut qy = h_old * state.v[k] + dt * self.dqy[k];
            if !(hn.is_finite() && qx.is_finite() && qy.is_finite()) {
                let (i, j) = grid.ij(k);
                return Err(SolverError::Instability { cell: k, i, j, t: t_new });
            }
            if hn < 0.0 {
                // round-off only; anything larger means the step broke positivity
                if hn < -1e-9 {
                    let (i, j) = grid.ij(k);
                    return Err(SolverError::Instability { cell: k, i, j, t: t_new });
                }
                hn = 0.0;
            }
            if hn < params.h_dry {
                state.h[k] = hn;
                state.u[k] = 0.0;
                state.v[k] = 0.0;
                continue;
            }
            let ux = qx / hn;
            let uy = qy / hn;
            let speed = (ux * ux + uy * uy).sqrt();
            let hr = hn.max(params.h_dry);
            let damp = 1.0 + dt * self.friction_coef[k] * speed / (hr * hr.cbrt());
            qx /= damp;
            qy /= damp;
            state.h[k] = hn;
            state.u[k] = qx / hn;
            state.v[k] = qy / hn;
        }
        state.t = t_new;
        Ok(BoundaryFluxes { inflow: inflow_total, outflow: outflow_total })
    }

    fn outflow_faces(
        &self,
        state: &RiverState,
        grid: &ScenarioGrid,
        params: &PhysicalParams,
        forcing: &Forcing<'_>,
        dt: f64,
    ) -> OutflowFaces {
        let mut faces = OutflowFaces::default();
        let Some(rc) = forcing.outflow else {
            return faces;
        };
        let wet: Vec<usize> =
            grid.downstream_cells.iter().copied().filter(|&k| state.h[k] >= params.h_dry).collect();
        // all downstream faces are open even when dry
        for &k in &grid.downstream_cells {
            if let Some(side) = grid.outflow_side(k) {
                faces.open.push((k, side));
            }
        }
        if wet.is_empty() {
            return faces;
        }
        let stage = wet.iter().map(|&k| state.surface(grid, k)).sum::<f64>() / wet.len() as f64;
        let q_total = rc.eval(stage);
        let weights: Vec<f64> = wet.iter().map(|&k| state.h[k] * state.h[k].powf(2.0 / 3.0)).collect();
        let wsum: f64 = weights.iter().sum();
        if !(wsum > 0.0) || q_total <= 0.0 {
            return faces;
        }
        for (&k, &w) in wet.iter().zip(&weights) {
            let side = grid.outflow_side(k).expect("validated downstream cell");
            let (face_len, depth_span) = match side {
                Side::East | Side::West => (grid.dy, grid.dx),
                Side::North | Side::South => (grid.dx, grid.dy),
            };
            let cap = 0.25 * state.h[k] * depth_span / dt;
            let q = (q_total * w / wsum / face_len).min(cap);
            faces.faces.push((k, side, q));
        }
        faces
    }

    fn add_diffusion(&mut self, state: &RiverState, grid: &ScenarioGrid, params: &PhysicalParams) {
        let (nx, ny) = (grid.nx, grid.ny);
        let nu = params.nu_e;
        let wet = |k: usize| state.h[k] >= params.h_dry;
        for j in 0..ny {
            for i in 0..nx.saturating_sub(1) {
                let l = j * nx + i;
                let r = l + 1;
                if !(wet(l) && wet(r)) {
                    continue;
                }
                let hf = 0.5 * (state.h[l] + state.h[r]);
                let fx = -nu * hf * (state.u[r] - state.u[l]) / grid.dx;
                let fy = -nu * hf * (state.v[r] - state.v[l]) / grid.dx;
                self.dqx[l] -= fx / grid.dx;
                self.dqx[r] += fx / grid.dx;
                self.dqy[l] -= fy / grid.dx;
                self.dqy[r] += fy / grid.dx;
            }
        }
        for j in 0..ny.saturating_sub(1) {
            for i in 0..nx {
                let l = j * nx + i;
                let r = l + nx;
                if !(wet(l) && wet(r)) {
                    continue;
                }
                let hf = 0.5 * (state.h[l] + state.h[r]);
                let fx = -nu * hf * (state.u[r] - state.u[l]) / grid.dy;
                let fy = -nu * hf * (state.v[r] - state.v[l]) / grid.dy;
                self.dqx[l] -= fx / grid.dy;
                self.dqx[r] += fx / grid.dy;
                self.dqy[l] -= fy / grid.dy;
                self.dqy[r] += fy / grid.dy;
            }
        }
    }
}

#[derive(Default)]
struct OutflowFaces {
    open: Vec<(usize, Side)>,
    faces: Vec<(usize, Side, f64)>,
}

impl OutflowFaces {
    fn contains(&self, k: usize, side: Side) -> bool {
        self.open.iter().any(|&(c, s)| c == k && s == side)
    }
}

/// Functional form of [`Solver::step`]: returns the advanced state.
pub fn step(
    state: &RiverState,
    grid: &ScenarioGrid,
    friction: &FrictionSet,
    params: &PhysicalParams,
    forcing: &Forcing<'_>,
    dt: f64,
) -> Result<RiverState, SolverError> {
    let mut next = state.clone();
    Solver::new(grid).step(&mut next, grid, friction, params, forcing, dt)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> PhysicalParams {
        PhysicalParams::default()
    }

    #[test]
    fn friction_hand_values() {
        let p = params();
        let (fx, fy) = friction_source(1.0, 1.0, 0.0, 45.0, &p);
        assert_relative_eq!(fx, -9.81 / 2025.0, max_relative = 1e-14);
        assert_eq!(fy, 0.0);
        assert_eq!(friction_source(1.0, 0.0, 0.0, 40.0, &p), (0.0, 0.0));
        let (fx, fy) = friction_source(1.0, 3.0, 4.0, 40.0, &p);
        assert_relative_eq!(fx, -(9.81 / 1600.0) * 3.0 * 5.0, max_relative = 1e-14);
        assert_relative_eq!(fy, -(9.81 / 1600.0) * 4.0 * 5.0, max_relative = 1e-14);
        assert!((fx - -9.197e-2).abs() < 1e-4);
    }

    #[test]
    fn friction_vanishes_on_dry_cells() {
        let p = params();
        assert_eq!(friction_source(p.h_dry * 0.5, 2.0, 1.0, 30.0, &p), (0.0, 0.0));
    }

    #[test]
    fn stable_dt_examples() {
        let grid = ScenarioGrid::flat(4, 4, 10.0, 10.0, 0.0);
        let p = PhysicalParams { cfl: 0.9, dt_max: 1e6, ..params() };
        let state = RiverState::lake(&grid, 1.0, 0.0);
        let dt = stable_dt(&state, &grid, &p);
        assert_relative_eq!(dt, 9.0 / 9.81f64.sqrt(), max_relative = 1e-14);
        assert!((dt - 2.873).abs() < 1e-3);

        let dry = RiverState::dry(grid.len(), 0.0);
        assert_eq!(stable_dt(&dry, &grid, &p), p.dt_max);

        let fine = ScenarioGrid::flat(4, 4, 5.0, 5.0, 0.0);
        assert_relative_eq!(stable_dt(&state, &fine, &p), 0.5 * dt, max_relative = 1e-14);
    }

    #[test]
    fn zero_state_step_is_exact_noop() {
        let grid = ScenarioGrid::flat(6, 5, 2.0, 3.0, 1.0);
        let state = RiverState::dry(grid.len(), 0.0);
        let next = step(&state, &grid, &FrictionSet::uniform(30.0), &params(), &Forcing::closed(), 1.0)
            .unwrap();
        assert_eq!(next.h, state.h);
        assert_eq!(next.t, 1.0);
    }

    #[test]
    fn non_finite_state_reports_cell() {
        let grid = ScenarioGrid::flat(3, 3, 1.0, 1.0, 0.0);
        let mut state = RiverState::lake(&grid, 1.0, 0.0);
        state.u[4] = f64::INFINITY;
        let err = step(&state, &grid, &FrictionSet::uniform(30.0), &params(), &Forcing::closed(), 0.1)
            .unwrap_err();
        assert!(matches!(err, SolverError::Instability { .. }), "{err}");
    }
}
