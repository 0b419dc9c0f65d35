//! Boundary forcing tables: upstream hydrograph and downstream rating curve.
//!
//! Both are piecewise-linear in their abscissa and clamp to the end values
//! outside the tabulated range.

use super::SolverError;

/// Anything that yields an inflow discharge (m³/s) at a given time.
pub trait Discharge: Send + Sync {
    fn discharge(&self, t: f64) -> f64;
}

/// Clamped piecewise-linear lookup on a strictly increasing abscissa.
fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert!(!xs.is_empty() && xs.len() == ys.len());
    let last = xs.len() - 1;
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[last] {
        return ys[last];
    }
    // first knot strictly greater than x; in 1..=last here
    let hi = xs.partition_point(|&k| k <= x);
    let lo = hi - 1;
    let w = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] + w * (ys[hi] - ys[lo])
}

fn check_increasing(xs: &[f64], what: &str) -> Result<(), SolverError> {
    if xs.is_empty() {
        return Err(SolverError::InvalidBoundary(format!("{what} has no samples")));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(SolverError::InvalidBoundary(format!("{what} has non-finite abscissa")));
    }
    if let Some(w) = xs.windows(2).position(|w| w[1] <= w[0]) {
        return Err(SolverError::InvalidBoundary(format!(
            "{what} abscissa not strictly increasing at sample {}",
            w + 1
        )));
    }
    Ok(())
}

/// Discharge time series `(t [s], q [m³/s])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hydrograph {
    times: Vec<f64>,
    flows: Vec<f64>,
}

impl Hydrograph {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self, SolverError> {
        let (times, flows): (Vec<f64>, Vec<f64>) = samples.into_iter().unzip();
        check_increasing(&times, "hydrograph")?;
        if let Some(k) = flows.iter().position(|q| !(q.is_finite() && *q >= 0.0)) {
            return Err(SolverError::InvalidBoundary(format!(
                "hydrograph discharge must be finite and non-negative (sample {k})"
            )));
        }
        Ok(Self { times, flows })
    }

    pub fn constant(q: f64) -> Self {
        Self { times: vec![0.0], flows: vec![q] }
    }

    pub fn eval(&self, t: f64) -> f64 {
        interp(&self.times, &self.flows, t)
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.flows.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

impl Discharge for Hydrograph {
    fn discharge(&self, t: f64) -> f64 {
        self.eval(t)
    }
}

/// Stage-discharge relation `(stage [m], q [m³/s])`.
///
/// The stage is the free-surface elevation averaged over the wet downstream
/// boundary cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingCurve {
    stages: Vec<f64>,
    flows: Vec<f64>,
}

impl RatingCurve {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self, SolverError> {
        let (stages, flows): (Vec<f64>, Vec<f64>) = samples.into_iter().unzip();
        check_increasing(&stages, "rating curve")?;
        if flows.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
            return Err(SolverError::InvalidBoundary(
                "rating curve discharge must be finite and non-negative".into(),
            ));
        }
        if flows.windows(2).any(|w| w[1] < w[0]) {
            return Err(SolverError::InvalidBoundary(
                "rating curve discharge must be non-decreasing".into(),
            ));
        }
        Ok(Self { stages, flows })
    }

    pub fn eval(&self, stage: f64) -> f64 {
        interp(&self.stages, &self.flows, stage)
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.stages.iter().copied().zip(self.flows.iter().copied())
    }
}

/// Free-function form of [`RatingCurve::eval`].
pub fn rating_curve_eval(rc: &RatingCurve, stage: f64) -> f64 {
    rc.eval(stage)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rating_curve_interpolates_linearly() {
        let rc = RatingCurve::new(vec![(0.0, 0.0), (2.0, 100.0)]).unwrap();
        assert_eq!(rating_curve_eval(&rc, 1.0), 50.0);
    }

    #[test]
    fn rating_curve_clamps_and_hits_knots() {
        let rc = RatingCurve::new(vec![(1.0, 10.0), (2.0, 30.0), (4.0, 90.0)]).unwrap();
        assert_eq!(rc.eval(-5.0), 10.0);
        assert_eq!(rc.eval(9.0), 90.0);
        assert_eq!(rc.eval(2.0), 30.0);
        assert_eq!(rc.eval(4.0), 90.0);
    }

    #[test]
    fn rating_curve_rejects_bad_tables() {
        assert!(RatingCurve::new(vec![]).is_err());
        assert!(RatingCurve::new(vec![(1.0, 0.0), (1.0, 2.0)]).is_err());
        assert!(RatingCurve::new(vec![(0.0, 5.0), (1.0, 2.0)]).is_err());
    }

    #[test]
    fn hydrograph_clamps_outside_range() {
        let q = Hydrograph::new(vec![(0.0, 100.0), (3600.0, 500.0)]).unwrap();
        assert_eq!(q.eval(-10.0), 100.0);
        assert_eq!(q.eval(1800.0), 300.0);
        assert_eq!(q.eval(1e9), 500.0);
    }

    #[test]
    fn hydrograph_rejects_negative_or_unsorted() {
        assert!(Hydrograph::new(vec![(0.0, -1.0)]).is_err());
        assert!(Hydrograph::new(vec![(10.0, 1.0), (5.0, 1.0)]).is_err());
    }

    proptest! {
        #[test]
        fn rating_curve_is_monotone(
            mut qs in proptest::collection::vec(0.0f64..1e4, 2..12),
            a in -5.0f64..25.0,
            b in -5.0f64..25.0,
        ) {
            qs.sort_by(f64::total_cmp);
            let rc = RatingCurve::new(qs.iter().enumerate().map(|(k, &q)| (k as f64 * 2.0, q)).collect()).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(rc.eval(lo) <= rc.eval(hi));
        }
    }
}
