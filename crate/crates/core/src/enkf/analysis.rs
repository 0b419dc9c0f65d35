//! Stochastic EnKF analysis step over the control vector.

use nalgebra::DMatrix;

use super::EnkfError;

/// Divisor for the ensemble covariance estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovarianceNormalization {
    /// `1 / N_e`
    #[default]
    Ensemble,
    /// `1 / (N_e - 1)`
    Unbiased,
}

impl CovarianceNormalization {
    fn divisor(self, n_e: usize) -> f64 {
        match self {
            Self::Ensemble => n_e as f64,
            Self::Unbiased => (n_e - 1) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOutput {
    /// Analyzed ensemble, `n x N_e`.
    pub xa: DMatrix<f64>,
    /// Kalman gain, `n x n_obs`.
    pub gain: DMatrix<f64>,
}

/// Columns minus their row mean.
pub fn anomalies(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n_e = m.ncols() as f64;
    let mut a = m.clone();
    for mut row in a.row_iter_mut() {
        let mean = row.sum() / n_e;
        row.add_scalar_mut(-mean);
    }
    a
}

/// Update `xf` (`n x N_e`) with perturbed observations.
///
/// `yf` holds the model equivalents and `y_obs_ens` the perturbed observations
/// (both `n_obs x N_e`); `r_diag` is the diagonal of the observation error
/// covariance. The gain is `P_xy (P_yy + R)^-1` with `P_xy = X Y^T / d` and
/// `P_yy = Y Y^T / d`, obtained through a Cholesky solve.
pub fn analysis(
    xf: &DMatrix<f64>,
    yf: &DMatrix<f64>,
    y_obs_ens: &DMatrix<f64>,
    r_diag: &[f64],
    normalization: CovarianceNormalization,
) -> Result<AnalysisOutput, EnkfError> {
    let n_e = xf.ncols();
    if n_e < 2 {
        return Err(EnkfError::TooFewMembers(n_e));
    }
    let n_obs = yf.nrows();
    if yf.ncols() != n_e || y_obs_ens.ncols() != n_e || y_obs_ens.nrows() != n_obs || r_diag.len() != n_obs
    {
        return Err(EnkfError::ShapeMismatch(format!(
            "xf {}x{}, yf {}x{}, y_obs {}x{}, R {}",
            xf.nrows(),
            n_e,
            n_obs,
            yf.ncols(),
            y_obs_ens.nrows(),
            y_obs_ens.ncols(),
            r_diag.len()
        )));
    }
    if n_obs == 0 {
        return Ok(AnalysisOutput { xa: xf.clone(), gain: DMatrix::zeros(xf.nrows(), 0) });
    }

    let d = normalization.divisor(n_e);
    let x = anomalies(xf);
    let y = anomalies(yf);
    let pxy = &x * y.transpose() / d;
    let mut s = &y * y.transpose() / d;
    for (k, r) in r_diag.iter().enumerate() {
        s[(k, k)] += r;
    }
    let chol = s.cholesky().ok_or(EnkfError::SingularInnovationCovariance)?;
    // K = Pxy S^-1  <=>  S K^T = Pxy^T
    let gain = chol.solve(&pxy.transpose()).transpose();
    if gain.iter().any(|g| !g.is_finite()) {
        return Err(EnkfError::SingularInnovationCovariance);
    }
    let innovations = y_obs_ens - yf;
    let xa = xf + &gain * innovations;
    Ok(AnalysisOutput { xa, gain })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian_row(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn zero_spread_gives_zero_gain() {
        let xf = DMatrix::from_element(7, 5, 3.0);
        let yf = DMatrix::from_element(4, 5, 1.0);
        let yo = DMatrix::from_fn(4, 5, |i, j| (i + j) as f64);
        let out = analysis(&xf, &yf, &yo, &[1.0; 4], CovarianceNormalization::Ensemble).unwrap();
        assert!(out.gain.iter().all(|&g| g == 0.0));
        assert_eq!(out.xa, xf);
    }

    #[test]
    fn scalar_identity_gain_is_half() {
        let n_e = 20_000;
        let x = DMatrix::from_row_slice(1, n_e, &gaussian_row(n_e, 1));
        let out = analysis(&x, &x, &x, &[1.0], CovarianceNormalization::Ensemble).unwrap();
        let k = out.gain[(0, 0)];
        assert!((k - 0.5).abs() < 3.0 / (n_e as f64).sqrt(), "gain {k}");
    }

    #[test]
    fn vanishing_r_recovers_perturbed_observation() {
        let n_e = 50;
        let x = DMatrix::from_row_slice(1, n_e, &gaussian_row(n_e, 2));
        let yo = DMatrix::from_row_slice(1, n_e, &gaussian_row(n_e, 3));
        let out = analysis(&x, &x, &yo, &[1e-12], CovarianceNormalization::Ensemble).unwrap();
        for j in 0..n_e {
            assert!((out.xa[(0, j)] - yo[(0, j)]).abs() < 1e-9);
        }
    }

    #[test]
    fn singular_without_observation_error() {
        let xf = DMatrix::from_element(2, 3, 1.0);
        let yf = DMatrix::from_element(2, 3, 1.0);
        let err = analysis(&xf, &yf, &yf, &[0.0, 0.0], CovarianceNormalization::Ensemble).unwrap_err();
        assert_eq!(err, EnkfError::SingularInnovationCovariance);
    }

    #[test]
    fn shape_checks() {
        let xf = DMatrix::from_element(7, 4, 1.0);
        let yf = DMatrix::from_element(3, 5, 1.0);
        assert!(matches!(
            analysis(&xf, &yf, &yf, &[1.0; 3], CovarianceNormalization::Ensemble),
            Err(EnkfError::ShapeMismatch(_))
        ));
        let one = DMatrix::from_element(7, 1, 1.0);
        assert_eq!(
            analysis(&one, &one, &one, &[1.0; 7], CovarianceNormalization::Ensemble),
            Err(EnkfError::TooFewMembers(1))
        );
    }

    #[test]
    fn mean_update_identity() {
        let n_e = 30;
        let xf = DMatrix::from_fn(7, n_e, |i, j| ((i * 31 + j * 17) % 13) as f64 + 0.1 * i as f64);
        let yf = DMatrix::from_fn(5, n_e, |i, j| ((i * 7 + j * 3) % 11) as f64 * 0.3);
        let yo = DMatrix::from_fn(5, n_e, |i, j| ((i + 2 * j) % 5) as f64);
        let out = analysis(&xf, &yf, &yo, &[0.5; 5], CovarianceNormalization::Unbiased).unwrap();
        let mean = |m: &DMatrix<f64>| m.column_mean();
        let expected = mean(&xf) + &out.gain * (mean(&yo) - mean(&yf));
        let got = mean(&out.xa);
        for k in 0..7 {
            assert!((got[k] - expected[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn scalar_gain_in_unit_interval() {
        for seed in 0..20 {
            let n_e = 10;
            let x = DMatrix::from_row_slice(1, n_e, &gaussian_row(n_e, seed));
            let r = seed as f64 * 0.1;
            if let Ok(out) = analysis(&x, &x, &x, &[r], CovarianceNormalization::Ensemble) {
                let k = out.gain[(0, 0)];
                assert!((0.0..=1.0 + 1e-12).contains(&k));
            }
        }
    }
}
