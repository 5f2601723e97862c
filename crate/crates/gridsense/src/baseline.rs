//! LMMSE baseline estimator and the error metrics used in benchmarks.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("H is {rows} x {cols} but y has {len} entries")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("normal matrix is singular (rank-deficient H with zero regularization)")]
    SingularSystem,
    #[error("vectors have lengths {left} and {right}")]
    LengthMismatch { left: usize, right: usize },
}

/// Regularized least-squares estimate `x = (H^H H + sigma2 I)^-1 H^H y`.
///
/// Quantized channels contribute through their representatives in `y`.
pub fn lmmse_estimate(
    h: &DMatrix<Complex64>,
    y: &DVector<Complex64>,
    sigma2: f64,
) -> Result<DVector<Complex64>, BaselineError> {
    if h.nrows() != y.len() {
        return Err(BaselineError::DimensionMismatch {
            rows: h.nrows(),
            cols: h.ncols(),
            len: y.len(),
        });
    }
    let n = h.ncols();
    let normal = h.adjoint() * h + DMatrix::<Complex64>::identity(n, n) * Complex64::from(sigma2);
    let rhs = h.adjoint() * y;
    normal
        .lu()
        .solve(&rhs)
        .ok_or(BaselineError::SingularSystem)
}

/// Mean squared error of the complex estimate, of the magnitudes, and of the
/// phases (wrapped to `(-pi, pi]` before squaring).
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct MetricsReport {
    pub mse: f64,
    pub mse_magnitude: f64,
    pub mse_phase: f64,
}

/// Wrap an angle difference into `(-pi, pi]`.
fn wrap_angle(d: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = d.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

pub fn compute_metrics(
    x_true: &DVector<Complex64>,
    x_hat: &DVector<Complex64>,
) -> Result<MetricsReport, BaselineError> {
    if x_true.len() != x_hat.len() || x_true.is_empty() {
        return Err(BaselineError::LengthMismatch {
            left: x_true.len(),
            right: x_hat.len(),
        });
    }
    let n = x_true.len() as f64;
    let mut mse = 0.0;
    let mut mse_mag = 0.0;
    let mut mse_ph = 0.0;
    for (t, e) in x_true.iter().zip(x_hat.iter()) {
        mse += (t - e).norm_sqr();
        let dm = t.norm() - e.norm();
        mse_mag += dm * dm;
        let dp = wrap_angle(t.arg() - e.arg());
        mse_ph += dp * dp;
    }
    Ok(MetricsReport {
        mse: mse / n,
        mse_magnitude: mse_mag / n,
        mse_phase: mse_ph / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn identity_passthrough_and_ridge() {
        let h = DMatrix::<Complex64>::identity(3, 3);
        let y = DVector::from_vec(vec![
            Complex64::new(1.0, -0.5),
            Complex64::new(0.2, 0.0),
            Complex64::new(-0.4, 0.9),
        ]);
        let x = lmmse_estimate(&h, &y, 0.0).unwrap();
        assert!((&x - &y).norm() < 1e-14);

        let x = lmmse_estimate(&h, &y, 1.0).unwrap();
        assert!((&x - &y / Complex64::from(2.0)).norm() < 1e-14);

        let x = lmmse_estimate(&h, &y, 1e12).unwrap();
        assert!(x.norm() < 1e-10);
    }

    #[test]
    fn singular_at_zero_regularization() {
        let h = DMatrix::from_element(2, 2, Complex64::new(1.0, 0.0)); // rank 1
        let y = DVector::from_element(2, Complex64::new(1.0, 0.0));
        assert!(matches!(
            lmmse_estimate(&h, &y, 0.0),
            Err(BaselineError::SingularSystem)
        ));
        assert!(lmmse_estimate(&h, &y, 1e-6).is_ok());
    }

    #[test]
    fn matches_stacked_qr_solve() {
        // oracle: least squares on [H; sqrt(sigma2) I] x = [y; 0]
        let h = DMatrix::from_row_slice(
            3,
            2,
            &[
                Complex64::new(1.0, 0.2),
                Complex64::new(-0.3, 0.5),
                Complex64::new(0.8, -0.1),
                Complex64::new(0.0, 1.1),
                Complex64::new(0.4, 0.4),
                Complex64::new(-0.7, 0.3),
            ],
        );
        let y = DVector::from_vec(vec![
            Complex64::new(0.9, -0.2),
            Complex64::new(0.1, 0.7),
            Complex64::new(-0.5, 0.0),
        ]);
        let sigma2 = 0.3f64;
        let mut stacked = DMatrix::<Complex64>::zeros(5, 2);
        stacked.view_mut((0, 0), (3, 2)).copy_from(&h);
        stacked[(3, 0)] = Complex64::from(sigma2.sqrt());
        stacked[(4, 1)] = Complex64::from(sigma2.sqrt());
        let mut rhs = DVector::<Complex64>::zeros(5);
        rhs.rows_mut(0, 3).copy_from(&y);
        let oracle = stacked.svd(true, true).solve(&rhs, 1e-14).unwrap();
        let x = lmmse_estimate(&h, &y, sigma2).unwrap();
        assert!((&x - &oracle).norm() < 1e-10);
    }

    #[test]
    fn metrics_perfect_estimate() {
        let x = DVector::from_vec(vec![Complex64::new(0.4, -1.0), Complex64::new(2.0, 0.3)]);
        let m = compute_metrics(&x, &x).unwrap();
        assert_eq!(m.mse, 0.0);
        assert_eq!(m.mse_magnitude, 0.0);
        assert_eq!(m.mse_phase, 0.0);
    }

    #[test]
    fn metrics_hand_computation() {
        let x = DVector::from_vec(vec![Complex64::new(1.0, 0.0)]);
        let e = DVector::from_vec(vec![Complex64::new(0.0, 1.0)]);
        let m = compute_metrics(&x, &e).unwrap();
        assert_relative_eq!(m.mse, 2.0);
        assert_relative_eq!(m.mse_magnitude, 0.0);
        assert_relative_eq!(m.mse_phase, FRAC_PI_2 * FRAC_PI_2);
    }

    #[test]
    fn phase_error_is_wrapped() {
        let x = DVector::from_vec(vec![Complex64::from_polar(1.0, 3.0)]);
        let e = DVector::from_vec(vec![Complex64::from_polar(1.0, -3.0)]);
        let m = compute_metrics(&x, &e).unwrap();
        let expected = (2.0 * PI - 6.0) * (2.0 * PI - 6.0);
        assert_relative_eq!(m.mse_phase, expected, max_relative = 1e-12);
    }

    #[test]
    fn mse_dominates_magnitude_mse() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let x = DVector::from_fn(5, |_, _| {
                Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            let e = DVector::from_fn(5, |_, _| {
                Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            let m = compute_metrics(&x, &e).unwrap();
            assert!(m.mse >= m.mse_magnitude - 1e-15);
        }
    }

    #[test]
    fn length_mismatch_detected() {
        let x = DVector::from_element(2, Complex64::default());
        let e = DVector::from_element(3, Complex64::default());
        assert!(matches!(
            compute_metrics(&x, &e),
            Err(BaselineError::LengthMismatch { .. })
        ));
    }
}
