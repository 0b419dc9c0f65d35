//! Station skill scores and flood-extent contingency scores.
//!
//! Undefined scores (empty denominators) come back as `None` and are written
//! as `NA`, never as zero.

use thiserror::Error;

use crate::swe::{RiverState, ScenarioGrid};

/// Depth above which a pixel counts as flooded.
pub const WET_THRESHOLD: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("series is empty")]
    Empty,
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("NSE needs at least two observations")]
    TooShort,
    #[error("observed series is constant; NSE denominator is zero")]
    ConstantObservations,
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

/// Time-aligned model and observed water levels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeriesPair {
    pub t: Vec<f64>,
    pub model: Vec<f64>,
    pub obs: Vec<f64>,
}

impl SeriesPair {
    pub fn new(t: Vec<f64>, model: Vec<f64>, obs: Vec<f64>) -> Result<Self, MetricError> {
        if model.len() != obs.len() {
            return Err(MetricError::LengthMismatch(model.len(), obs.len()));
        }
        if t.len() != obs.len() {
            return Err(MetricError::LengthMismatch(t.len(), obs.len()));
        }
        Ok(Self { t, model, obs })
    }

    /// Pair without timestamps (sample index used as time).
    pub fn from_values(model: &[f64], obs: &[f64]) -> Result<Self, MetricError> {
        let t = (0..obs.len()).map(|k| k as f64).collect();
        Self::new(t, model.to_vec(), obs.to_vec())
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    fn errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.model.iter().zip(&self.obs).map(|(m, o)| m - o)
    }
}

pub fn rmse(p: &SeriesPair) -> Result<f64, MetricError> {
    if p.is_empty() {
        return Err(MetricError::Empty);
    }
    let sse: f64 = p.errors().map(|e| e * e).sum();
    Ok((sse / p.len() as f64).sqrt())
}

/// Maximum absolute error.
pub fn maae(p: &SeriesPair) -> Result<f64, MetricError> {
    if p.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(p.errors().fold(0.0, |acc, e| acc.max(e.abs())))
}

/// Nash-Sutcliffe efficiency.
pub fn nse(p: &SeriesPair) -> Result<f64, MetricError> {
    if p.len() < 2 {
        return Err(if p.is_empty() { MetricError::Empty } else { MetricError::TooShort });
    }
    let mean = p.obs.iter().sum::<f64>() / p.len() as f64;
    let var: f64 = p.obs.iter().map(|o| (o - mean).powi(2)).sum();
    if var == 0.0 {
        return Err(MetricError::ConstantObservations);
    }
    let sse: f64 = p.errors().map(|e| e * e).sum();
    Ok(1.0 - sse / var)
}

/// Binary flood raster on the reference grid (row-major, `j * nx + i`).
#[derive(Debug, Clone, PartialEq)]
pub struct FloodMask {
    pub nx: usize,
    pub ny: usize,
    pub wet: Vec<bool>,
    /// Pixels removed from every score tally.
    pub exclusion: Option<Vec<bool>>,
}

impl FloodMask {
    pub fn new(nx: usize, ny: usize, wet: Vec<bool>) -> Self {
        assert_eq!(wet.len(), nx * ny, "mask size must equal nx*ny");
        Self { nx, ny, wet, exclusion: None }
    }

    pub fn with_exclusion(mut self, exclusion: Vec<bool>) -> Self {
        assert_eq!(exclusion.len(), self.nx * self.ny, "exclusion size must equal nx*ny");
        self.exclusion = Some(exclusion);
        self
    }

    pub fn wet_fraction(&self) -> f64 {
        self.wet.iter().filter(|&&w| w).count() as f64 / self.wet.len().max(1) as f64
    }
}

/// Wet strictly above `threshold`; a depth exactly at the threshold is dry.
pub fn rasterize_flood_mask(state: &RiverState, grid: &ScenarioGrid, threshold: f64) -> FloodMask {
    FloodMask::new(grid.nx, grid.ny, state.h.iter().map(|&h| h > threshold).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ContingencyCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ContingencyCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Counts with simulation and observation roles exchanged.
    pub fn swapped(&self) -> Self {
        Self { tp: self.tp, fp: self.fn_, tn: self.tn, fn_: self.fp }
    }
}

/// Per-pixel outcome. Codes are what the contingency rasters store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ContingencyClass {
    Excluded = 0,
    /// Correctly predicted flooded (dark blue).
    TruePositive = 1,
    /// Correctly predicted dry (light blue).
    TrueNegative = 2,
    /// Under-prediction (yellow).
    FalseNegative = 3,
    /// Over-prediction (red).
    FalsePositive = 4,
}

impl ContingencyClass {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => Self::Excluded,
            1 => Self::TruePositive,
            2 => Self::TrueNegative,
            3 => Self::FalseNegative,
            4 => Self::FalsePositive,
            _ => return None,
        })
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Excluded => "excluded",
            Self::TruePositive => "true positive",
            Self::TrueNegative => "true negative",
            Self::FalseNegative => "false negative (under-prediction)",
            Self::FalsePositive => "false positive (over-prediction)",
        }
    }

    /// RGB color used on contingency maps.
    pub fn color(self) -> [u8; 3] {
        match self {
            Self::Excluded => [255, 255, 255],
            Self::TruePositive => [0, 0, 139],
            Self::TrueNegative => [173, 216, 230],
            Self::FalseNegative => [255, 255, 0],
            Self::FalsePositive => [255, 0, 0],
        }
    }
}

/// Pixelwise tally of `sim` against `obs`, skipping excluded pixels.
///
/// Exclusion is the union of the explicit `exclusion` and any exclusion
/// attached to either mask.
pub fn contingency(
    sim: &FloodMask,
    obs: &FloodMask,
    exclusion: Option<&[bool]>,
) -> Result<(ContingencyCounts, Vec<ContingencyClass>), MetricError> {
    if sim.nx != obs.nx || sim.ny != obs.ny {
        return Err(MetricError::DimensionMismatch(sim.nx, sim.ny, obs.nx, obs.ny));
    }
    let n = sim.wet.len();
    if let Some(ex) = exclusion {
        if ex.len() != n {
            return Err(MetricError::DimensionMismatch(sim.nx, sim.ny, ex.len(), 1));
        }
    }
    let excluded = |k: usize| {
        exclusion.is_some_and(|e| e[k])
            || sim.exclusion.as_ref().is_some_and(|e| e[k])
            || obs.exclusion.as_ref().is_some_and(|e| e[k])
    };
    let mut counts = ContingencyCounts::default();
    let mut raster = Vec::with_capacity(n);
    for k in 0..n {
        let class = if excluded(k) {
            ContingencyClass::Excluded
        } else {
            match (sim.wet[k], obs.wet[k]) {
                (true, true) => {
                    counts.tp += 1;
                    ContingencyClass::TruePositive
                }
                (true, false) => {
                    counts.fp += 1;
                    ContingencyClass::FalsePositive
                }
                (false, true) => {
                    counts.fn_ += 1;
                    ContingencyClass::FalseNegative
                }
                (false, false) => {
                    counts.tn += 1;
                    ContingencyClass::TrueNegative
                }
            }
        };
        raster.push(class);
    }
    Ok((counts, raster))
}

/// Critical success index `TP / (TP + FP + FN)`.
pub fn csi(c: &ContingencyCounts) -> Option<f64> {
    let den = c.tp + c.fp + c.fn_;
    (den > 0).then(|| c.tp as f64 / den as f64)
}

/// F-beta score from precision and recall.
///
/// When `TP = 0` but some pixel is wet in either mask the score is 0 (one of
/// precision/recall is 0/0); when nothing is wet anywhere it is undefined.
pub fn f_beta(c: &ContingencyCounts, beta: f64) -> Option<f64> {
    if c.tp + c.fp + c.fn_ == 0 {
        return None;
    }
    if c.tp == 0 {
        return Some(0.0);
    }
    let precision = c.tp as f64 / (c.tp + c.fp) as f64;
    let recall = c.tp as f64 / (c.tp + c.fn_) as f64;
    let b2 = beta * beta;
    Some((1.0 + b2) * precision * recall / (b2 * precision + recall))
}

/// Chance-agreement term used by [`kappa`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KappaMode {
    /// `p_e = P(obs wet) * P(sim wet)` only.
    #[default]
    Paper,
    /// Standard Cohen form, adding the dry-dry chance agreement.
    Standard,
}

pub fn kappa(c: &ContingencyCounts, mode: KappaMode) -> Option<f64> {
    let n = c.total();
    if n == 0 {
        return None;
    }
    let n = n as f64;
    let po = (c.tp + c.tn) as f64 / n;
    let mut pe = ((c.tp + c.fn_) as f64 / n) * ((c.tp + c.fp) as f64 / n);
    if mode == KappaMode::Standard {
        pe += ((c.tn + c.fp) as f64 / n) * ((c.tn + c.fn_) as f64 / n);
    }
    if pe == 1.0 {
        return None;
    }
    Some((po - pe) / (1.0 - pe))
}

/// `NA` for undefined scores, shortest round-trip decimal otherwise.
pub fn format_score(s: Option<f64>) -> String {
    match s {
        Some(v) => format!("{v}"),
        None => "NA".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(model: &[f64], obs: &[f64]) -> SeriesPair {
        SeriesPair::from_values(model, obs).unwrap()
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&pair(&[1.0, 2.0], &[1.0, 2.0])).unwrap(), 0.0);
        assert_eq!(rmse(&pair(&[2.0, 3.0, 4.0], &[1.0, 2.0, 3.0])).unwrap(), 1.0);
        assert!((rmse(&pair(&[3.0, 4.0], &[0.0, 0.0])).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(rmse(&SeriesPair::default()), Err(MetricError::Empty));
    }

    #[test]
    fn maae_examples() {
        assert_eq!(maae(&pair(&[1.0], &[1.0])).unwrap(), 0.0);
        assert_eq!(maae(&pair(&[0.1, -1.87, 0.3], &[0.0, 0.0, 0.0])).unwrap(), 1.87);
        assert_eq!(maae(&pair(&[-2.0], &[0.0])).unwrap(), 2.0);
        assert_eq!(maae(&SeriesPair::default()), Err(MetricError::Empty));
    }

    #[test]
    fn nse_examples() {
        let obs = [1.0, 2.0, 3.0];
        assert_eq!(nse(&pair(&obs, &obs)).unwrap(), 1.0);
        assert_eq!(nse(&pair(&[2.0, 2.0, 2.0], &obs)).unwrap(), 0.0);
        assert_eq!(nse(&pair(&[1.0, 2.0, 4.0], &obs)).unwrap(), 0.5);
        assert_eq!(nse(&pair(&[1.0, 2.0], &[3.0, 3.0])), Err(MetricError::ConstantObservations));
        assert_eq!(nse(&pair(&[1.0], &[3.0])), Err(MetricError::TooShort));
    }

    #[test]
    fn series_length_mismatch() {
        assert!(SeriesPair::from_values(&[1.0], &[1.0, 2.0]).is_err());
    }

    fn mask(values: &[u8], nx: usize) -> FloodMask {
        FloodMask::new(nx, values.len() / nx, values.iter().map(|&v| v == 1).collect())
    }

    #[test]
    fn contingency_identical_masks() {
        let m = mask(&[1, 0, 1, 1, 0, 0], 3);
        let (c, _) = contingency(&m, &m, None).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        assert_eq!(c.tp, 3);
    }

    #[test]
    fn contingency_two_by_two() {
        // rows listed top to bottom: [1,1;0,0] and [1,0;1,0]
        let sim = mask(&[1, 1, 0, 0], 2);
        let obs = mask(&[1, 0, 1, 0], 2);
        let (c, raster) = contingency(&sim, &obs, None).unwrap();
        assert_eq!(c, ContingencyCounts { tp: 1, fp: 1, tn: 1, fn_: 1 });
        assert_eq!(raster[1], ContingencyClass::FalsePositive);
        assert_eq!(raster[2], ContingencyClass::FalseNegative);

        let exclusion = [false, true, false, false];
        let (c, raster) = contingency(&sim, &obs, Some(&exclusion)).unwrap();
        assert_eq!(c, ContingencyCounts { tp: 1, fp: 0, tn: 1, fn_: 1 });
        assert_eq!(raster[1], ContingencyClass::Excluded);
    }

    #[test]
    fn contingency_dimension_mismatch() {
        let a = mask(&[1, 0, 1, 0], 2);
        let b = mask(&[1, 0, 1, 0], 4);
        assert!(matches!(contingency(&a, &b, None), Err(MetricError::DimensionMismatch(..))));
    }

    #[test]
    fn csi_and_f_beta_examples() {
        let c = ContingencyCounts { tp: 5, fp: 0, tn: 3, fn_: 0 };
        assert_eq!(csi(&c), Some(1.0));
        let c = ContingencyCounts { tp: 1, fp: 1, tn: 0, fn_: 1 };
        assert!((csi(&c).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((f_beta(&c, 1.0).unwrap() - 0.5).abs() < 1e-12);
        let c = ContingencyCounts { tp: 4, fp: 1, tn: 0, fn_: 1 };
        assert!((f_beta(&c, 2.0).unwrap() - 0.8).abs() < 1e-12);
        // P = R = p gives F1 = p
        let c = ContingencyCounts { tp: 3, fp: 2, tn: 10, fn_: 2 };
        assert!((f_beta(&c, 1.0).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn undefined_scores() {
        let all_dry = ContingencyCounts { tp: 0, fp: 0, tn: 9, fn_: 0 };
        assert_eq!(csi(&all_dry), None);
        assert_eq!(f_beta(&all_dry, 1.0), None);
        let missed = ContingencyCounts { tp: 0, fp: 0, tn: 9, fn_: 2 };
        assert_eq!(f_beta(&missed, 1.0), Some(0.0));
        let all_wet = ContingencyCounts { tp: 9, fp: 0, tn: 0, fn_: 0 };
        assert_eq!(kappa(&all_wet, KappaMode::Paper), None);
        assert_eq!(kappa(&ContingencyCounts::default(), KappaMode::Standard), None);
        assert_eq!(format_score(None), "NA");
    }

    #[test]
    fn kappa_examples() {
        let c = ContingencyCounts { tp: 40, fp: 10, tn: 40, fn_: 10 };
        assert!((kappa(&c, KappaMode::Paper).unwrap() - 0.55 / 0.75).abs() < 1e-12);
        assert!((kappa(&c, KappaMode::Standard).unwrap() - 0.6).abs() < 1e-12);
        let perfect = ContingencyCounts { tp: 30, fp: 0, tn: 70, fn_: 0 };
        assert!((kappa(&perfect, KappaMode::Paper).unwrap() - 1.0).abs() < 1e-15);
        assert!((kappa(&perfect, KappaMode::Standard).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rasterize_threshold_is_strict() {
        let grid = ScenarioGrid::flat(3, 1, 1.0, 1.0, 0.0);
        let mut state = RiverState::dry(3, 0.0);
        state.h = vec![0.051, 0.049, WET_THRESHOLD];
        let m = rasterize_flood_mask(&state, &grid, WET_THRESHOLD);
        assert_eq!(m.wet, vec![true, false, false]);
    }

    fn counts() -> impl Strategy<Value = ContingencyCounts> {
        (0u64..500, 0u64..500, 0u64..500, 0u64..500)
            .prop_map(|(tp, fp, tn, fn_)| ContingencyCounts { tp, fp, tn, fn_ })
    }

    proptest! {
        #[test]
        fn scores_bounded_and_csi_below_f1(c in counts()) {
            if let Some(s) = csi(&c) {
                prop_assert!((0.0..=1.0).contains(&s));
                let f1 = f_beta(&c, 1.0).unwrap();
                prop_assert!((0.0..=1.0).contains(&f1));
                prop_assert!(s <= f1 + 1e-15);
            }
            for mode in [KappaMode::Paper, KappaMode::Standard] {
                if let Some(k) = kappa(&c, mode) {
                    prop_assert!(k <= 1.0 + 1e-12);
                }
            }
        }

        #[test]
        fn contingency_swap_symmetry(bits in proptest::collection::vec((any::<bool>(), any::<bool>(), any::<bool>()), 1..200)) {
            let n = bits.len();
            let sim = FloodMask::new(n, 1, bits.iter().map(|b| b.0).collect());
            let obs = FloodMask::new(n, 1, bits.iter().map(|b| b.1).collect());
            let ex: Vec<bool> = bits.iter().map(|b| b.2).collect();
            let (ab, _) = contingency(&sim, &obs, Some(&ex)).unwrap();
            let (ba, _) = contingency(&obs, &sim, Some(&ex)).unwrap();
            prop_assert_eq!(ab.swapped(), ba);
            prop_assert_eq!(ab.total() as usize, ex.iter().filter(|&&e| !e).count());
        }

        #[test]
        fn offsets_leave_rmse_and_nse_unchanged(
            obs in proptest::collection::vec(-10.0f64..10.0, 3..40),
            noise in proptest::collection::vec(-1.0f64..1.0, 40),
            shift in -100.0f64..100.0,
        ) {
            let model: Vec<f64> = obs.iter().zip(&noise).map(|(o, e)| o + e).collect();
            let p = pair(&model, &obs);
            let q = pair(
                &model.iter().map(|m| m + shift).collect::<Vec<_>>(),
                &obs.iter().map(|o| o + shift).collect::<Vec<_>>(),
            );
            prop_assert!((rmse(&p).unwrap() - rmse(&q).unwrap()).abs() < 1e-9);
            if let (Ok(a), Ok(b)) = (nse(&p), nse(&q)) {
                prop_assert!((a - b).abs() < 1e-6 * (1.0 + a.abs()));
            }
        }
    }
}
