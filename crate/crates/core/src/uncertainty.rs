//! Control vector, its Gaussian prior, and the parametric inflow perturbation.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::seeding;
use crate::swe::{Discharge, FrictionSet, Hydrograph};

/// Number of assimilated scalars.
pub const N_CONTROL: usize = 7;

/// Lower bound applied to sampled Strickler coefficients.
pub const KS_MIN: f64 = 1.0;

pub const CONTROL_NAMES: [&str; N_CONTROL] = ["ks0", "ks1", "ks2", "ks3", "a", "b", "c"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UncertaintyError {
    #[error("ensemble needs at least 2 members, got {0}")]
    TooFewMembers(usize),
    #[error("empty analysis ensemble")]
    EmptyEnsemble,
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("resampling weights must be non-negative (lambda1={0}, lambda2={1})")]
    NegativeLambda(f64, f64),
}

/// Four zone Strickler coefficients plus the inflow coefficients `(a, b, c)`.
///
/// `a` scales the discharge, `b` offsets it (m³/s) and `c` shifts it in time (s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlVector {
    pub ks0: f64,
    pub ks1: f64,
    pub ks2: f64,
    pub ks3: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for ControlVector {
    fn default() -> Self {
        ControlPrior::default().mean
    }
}

impl ControlVector {
    pub fn from_array(x: [f64; N_CONTROL]) -> Self {
        Self { ks0: x[0], ks1: x[1], ks2: x[2], ks3: x[3], a: x[4], b: x[5], c: x[6] }
    }

    pub fn to_array(&self) -> [f64; N_CONTROL] {
        [self.ks0, self.ks1, self.ks2, self.ks3, self.a, self.b, self.c]
    }

    /// Clip the Strickler components to at least [`KS_MIN`].
    pub fn clipped(mut self) -> Self {
        self.ks0 = self.ks0.max(KS_MIN);
        self.ks1 = self.ks1.max(KS_MIN);
        self.ks2 = self.ks2.max(KS_MIN);
        self.ks3 = self.ks3.max(KS_MIN);
        self
    }

    pub fn friction(&self) -> FrictionSet {
        let c = self.clipped();
        FrictionSet { ks: [c.ks0, c.ks1, c.ks2, c.ks3] }
    }

    pub fn inflow(&self, q: &Hydrograph) -> PerturbedHydrograph {
        perturb_hydrograph(q, self.a, self.b, self.c)
    }
}

/// Independent Gaussian prior on each control component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlPrior {
    pub mean: ControlVector,
    pub sigma: [f64; N_CONTROL],
}

impl Default for ControlPrior {
    fn default() -> Self {
        Self {
            mean: ControlVector { ks0: 17.0, ks1: 45.0, ks2: 38.0, ks3: 40.0, a: 1.0, b: 0.0, c: 0.0 },
            sigma: [0.85, 2.25, 1.9, 2.0, 0.06, 100.0, 900.0],
        }
    }
}

impl ControlPrior {
    pub fn validate(&self) -> Result<(), UncertaintyError> {
        if let Some(k) = self.sigma.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(UncertaintyError::InvalidPrior(format!(
                "sigma of {} must be positive",
                CONTROL_NAMES[k]
            )));
        }
        if self.mean.to_array().iter().any(|m| !m.is_finite()) {
            return Err(UncertaintyError::InvalidPrior("non-finite prior mean".into()));
        }
        Ok(())
    }

    /// Half-width of the central 95% interval per component.
    pub fn interval95(&self) -> [f64; N_CONTROL] {
        self.sigma.map(|s| 1.96 * s)
    }
}

/// A set of control vectors with the sampling standard deviation that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub members: Vec<ControlVector>,
    /// Standard deviation each component was drawn with.
    pub sampling_sigma: [f64; N_CONTROL],
    /// Random-stream label per member, e.g. `resampling/3/12`.
    pub lineage: Vec<String>,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn mean(&self) -> [f64; N_CONTROL] {
        mean_of(&self.members)
    }

    pub fn std(&self) -> [f64; N_CONTROL] {
        std_of(&self.members)
    }
}

pub(crate) fn mean_of(members: &[ControlVector]) -> [f64; N_CONTROL] {
    let mut m = [0.0; N_CONTROL];
    for x in members {
        for (acc, v) in m.iter_mut().zip(x.to_array()) {
            *acc += v;
        }
    }
    let n = members.len().max(1) as f64;
    m.map(|v| v / n)
}

/// Sample standard deviation with the `n - 1` divisor; zero for fewer than two members.
pub(crate) fn std_of(members: &[ControlVector]) -> [f64; N_CONTROL] {
    if members.len() < 2 {
        return [0.0; N_CONTROL];
    }
    let m = mean_of(members);
    let mut s = [0.0; N_CONTROL];
    for x in members {
        for (k, v) in x.to_array().iter().enumerate() {
            s[k] += (v - m[k]).powi(2);
        }
    }
    s.map(|v| (v / (members.len() - 1) as f64).sqrt())
}

/// Inflow `Q'(t) = max(0, a Q(t - c) + b)` over a base hydrograph.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedHydrograph {
    pub base: Hydrograph,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl PerturbedHydrograph {
    pub fn eval(&self, t: f64) -> f64 {
        (self.a * self.base.eval(t - self.c) + self.b).max(0.0)
    }
}

impl Discharge for PerturbedHydrograph {
    fn discharge(&self, t: f64) -> f64 {
        self.eval(t)
    }
}

pub fn perturb_hydrograph(q: &Hydrograph, a: f64, b: f64, c: f64) -> PerturbedHydrograph {
    PerturbedHydrograph { base: q.clone(), a, b, c }
}

fn draw_member<R: Rng>(rng: &mut R, center: [f64; N_CONTROL], sigma: [f64; N_CONTROL]) -> ControlVector {
    let mut x = [0.0; N_CONTROL];
    for k in 0..N_CONTROL {
        let z: f64 = rng.sample(StandardNormal);
        x[k] = center[k] + sigma[k] * z;
    }
    ControlVector::from_array(x).clipped()
}

/// First-cycle ensemble: `x0 + theta`, `theta ~ N(0, sigma_x^2)` per component.
pub fn sample_prior(prior: &ControlPrior, n_e: usize, seed: u64) -> Result<Ensemble, UncertaintyError> {
    if n_e < 2 {
        return Err(UncertaintyError::TooFewMembers(n_e));
    }
    prior.validate()?;
    let center = prior.mean.to_array();
    let members = (0..n_e)
        .map(|i| draw_member(&mut seeding::stream(seed, seeding::PRIOR, &[i as u64]), center, prior.sigma))
        .collect();
    let lineage = (0..n_e).map(|i| format!("{}/{i}", seeding::PRIOR)).collect();
    Ok(Ensemble { members, sampling_sigma: prior.sigma, lineage })
}

/// Resampling standard deviation `lambda1 * std(analysis) + lambda2 * sigma_x`.
pub fn resampling_sigma(
    analysis: &[ControlVector],
    prior: &ControlPrior,
    lambda1: f64,
    lambda2: f64,
) -> [f64; N_CONTROL] {
    let spread = std_of(analysis);
    let mut s = [0.0; N_CONTROL];
    for k in 0..N_CONTROL {
        s[k] = lambda1 * spread[k] + lambda2 * prior.sigma[k];
    }
    s
}

/// Later-cycle ensemble: analysis mean plus `theta ~ N(0, sigma_c^2)`.
///
/// `cycle` selects the random stream so that every cycle draws independently.
pub fn resample_around_mean(
    analysis: &[ControlVector],
    prior: &ControlPrior,
    lambda1: f64,
    lambda2: f64,
    seed: u64,
    cycle: u64,
) -> Result<Ensemble, UncertaintyError> {
    if analysis.is_empty() {
        return Err(UncertaintyError::EmptyEnsemble);
    }
    if !(lambda1 >= 0.0 && lambda2 >= 0.0) {
        return Err(UncertaintyError::NegativeLambda(lambda1, lambda2));
    }
    prior.validate()?;
    let center = mean_of(analysis);
    let sigma = resampling_sigma(analysis, prior, lambda1, lambda2);
    let n_e = analysis.len();
    let members = (0..n_e)
        .map(|i| {
            let mut rng = seeding::stream(seed, seeding::RESAMPLE, &[cycle, i as u64]);
            draw_member(&mut rng, center, sigma)
        })
        .collect();
    let lineage = (0..n_e).map(|i| format!("{}/{cycle}/{i}", seeding::RESAMPLE)).collect();
    Ok(Ensemble { members, sampling_sigma: sigma, lineage })
}
