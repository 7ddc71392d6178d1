//! Innovation and residual statistics, Mahalanobis testing, chi-square
//! thresholds.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::estimation::{JointEstimate, RegressionSystem};
use crate::linalg::symmetrize;
use crate::scalar::{from_f64, to_f64, Scalar};

/// Innovation vector over one regression window with its covariance
/// `S = O P O^T + R_w`. The covariance is exact when the supplied estimate's
/// error is independent of the window's measurement noise; with the estimate
/// taken from the same window the statistic is conservative (its true spread
/// is smaller than S), which keeps thresholds valid.
#[derive(Clone, Debug)]
pub struct Innovation<T> {
    pub y: DVector<T>,
    pub s: DMatrix<T>,
}

/// `y = rhs - O [x; u]`, `S = O P O^T + R_w`.
pub fn innovation<T: Scalar>(
    sys: &RegressionSystem<T>,
    prior: &JointEstimate<T>,
) -> Result<Innovation<T>> {
    if prior.n_states() != sys.n_states || prior.n_inputs() != sys.n_inputs {
        return Err(Error::Dimension {
            context: "innovation prior",
            expected: sys.unknowns(),
            got: prior.n_states() + prior.n_inputs(),
        });
    }
    let joint = prior.joint_vector();
    let y = &sys.rhs - &sys.o * joint;
    let s = symmetrize(&(&sys.o * &prior.p * sys.o.transpose() + &sys.r_w));
    Ok(Innovation { y, s })
}

/// Static-estimation residual `r = z - H x_hat`. With `x_hat` the WLS solution
/// for (z, H, W) this equals `(I - M) z` with the projection
/// `M = H (H^T W H)^{-1} H^T W`; the weighting enters through how `x_hat` was
/// produced.
pub fn residual_static<T: Scalar>(
    z: &DVector<T>,
    h: &DMatrix<T>,
    x_hat: &DVector<T>,
) -> Result<DVector<T>> {
    if z.len() != h.nrows() || x_hat.len() != h.ncols() {
        return Err(Error::Dimension {
            context: "static residual",
            expected: h.nrows(),
            got: z.len(),
        });
    }
    Ok(z - h * x_hat)
}

/// Covariance-weighted norm `sqrt(y^T S^{-1} y)`, computed through a Cholesky
/// solve of S.
pub fn mahalanobis<T: Scalar>(y: &DVector<T>, s: &DMatrix<T>) -> Result<T> {
    if s.nrows() != y.len() || s.ncols() != y.len() {
        return Err(Error::Dimension {
            context: "mahalanobis",
            expected: y.len(),
            got: s.nrows(),
        });
    }
    let chol = nalgebra::Cholesky::new(s.clone())
        .ok_or_else(|| Error::Numerical("mahalanobis covariance not SPD".into()))?;
    let solved = chol.solve(y);
    Ok(y.dot(&solved).max(T::zero()).sqrt())
}

/// Verdict of a single bad-data test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DetectionFlag {
    Clean,
    BadData,
}

/// Distance, threshold, and verdict of one Mahalanobis test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionReport<T> {
    pub d_m: T,
    /// Threshold on d_M itself (chi-square quantile of d_M^2, square-rooted).
    pub threshold: T,
    pub dof: usize,
    pub flag: DetectionFlag,
}

/// Chi-square quantile of the squared distance at confidence `1 - alpha`.
pub fn chi_square_quantile(p: f64, dof: usize) -> Result<f64> {
    if dof == 0 {
        return Err(Error::Parameter("chi-square dof must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Parameter("chi-square quantile needs 0 <= p < 1".into()));
    }
    let dist = ChiSquared::new(dof as f64)
        .map_err(|e| Error::Numerical(format!("chi-square({dof}): {e}")))?;
    Ok(dist.inverse_cdf(p))
}

/// Flags bad data when `d_M^2` exceeds the chi-square(1 - alpha, dof) quantile.
pub fn detect<T: Scalar>(d_m: T, dof: usize, alpha: f64) -> Result<DetectionReport<T>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter("alpha must be in (0, 1)".into()));
    }
    let threshold_sq = chi_square_quantile(1.0 - alpha, dof)?;
    let threshold = from_f64::<T>(threshold_sq.sqrt());
    let flag = if to_f64(d_m) * to_f64(d_m) > threshold_sq {
        DetectionFlag::BadData
    } else {
        DetectionFlag::Clean
    };
    Ok(DetectionReport {
        d_m,
        threshold,
        dof,
        flag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn consistent_data_gives_zero_innovation() {
        let o = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let joint = DVector::from_row_slice(&[0.5, -0.5]);
        let sys = RegressionSystem {
            rhs: &o * &joint,
            o,
            r_w: DMatrix::identity(3, 3),
            k: 0,
            n_states: 1,
            n_inputs: 1,
        };
        let prior = JointEstimate::new(
            0,
            DVector::from_row_slice(&[0.5]),
            DVector::from_row_slice(&[-0.5]),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let innov = innovation(&sys, &prior).unwrap();
        assert_relative_eq!(innov.y.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn certain_prior_gives_measurement_covariance() {
        let o = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let sys = RegressionSystem {
            o,
            r_w: DMatrix::from_diagonal(&DVector::from_row_slice(&[0.3, 0.7])),
            rhs: DVector::zeros(2),
            k: 0,
            n_states: 1,
            n_inputs: 0,
        };
        let prior =
            JointEstimate::new(0, DVector::zeros(1), DVector::zeros(0), DMatrix::zeros(1, 1))
                .unwrap();
        let innov = innovation(&sys, &prior).unwrap();
        assert_relative_eq!(innov.s, sys.r_w, epsilon = 1e-14);
    }

    #[test]
    fn residual_vanishes_in_range_and_for_square_h() {
        let h = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, -1.0]);
        let x = DVector::from_row_slice(&[2.0, 3.0]);
        let z = &h * &x;
        let r = residual_static(&z, &h, &x).unwrap();
        assert_relative_eq!(r.norm(), 0.0, epsilon = 1e-12);

        // square invertible H: the WLS fit interpolates, r = 0 for any z
        let hs = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]);
        let zs = DVector::from_row_slice(&[5.0, -1.0]);
        let xs = hs.clone().try_inverse().unwrap() * &zs;
        let rs = residual_static(&zs, &hs, &xs).unwrap();
        assert_relative_eq!(rs.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn residual_blind_to_column_space_injection() {
        // z and z + H x_b give identical residuals (projection form oracle)
        let h = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, -1.0]);
        let w = DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 0.5, 2.0, 1.5]));
        let z = DVector::from_row_slice(&[0.3, 1.0, -0.4, 0.8]);
        let x_b = DVector::from_row_slice(&[5.0, -3.0]);
        let zf = &z + &h * &x_b;

        let solve = |zz: &DVector<f64>| {
            crate::estimation::static_wls_baseline(&h, &w, zz).unwrap()
        };
        let r_clean = residual_static(&z, &h, &solve(&z)).unwrap();
        let r_attacked = residual_static(&zf, &h, &solve(&zf)).unwrap();
        assert_relative_eq!(r_clean, r_attacked, epsilon = 1e-9);

        // projection-matrix oracle: r = (I - M) z
        let m = &h * (h.transpose() * &w * &h).try_inverse().unwrap() * h.transpose() * &w;
        let r_oracle = (DMatrix::identity(4, 4) - m) * &z;
        assert_relative_eq!(r_clean, r_oracle, epsilon = 1e-9);
    }

    #[test]
    fn mahalanobis_basics() {
        let y0 = DVector::from_row_slice(&[0.0, 0.0]);
        let s = DMatrix::identity(2, 2);
        assert_relative_eq!(mahalanobis(&y0, &s).unwrap(), 0.0);

        // Euclidean special case
        let y = DVector::from_row_slice(&[3.0, 4.0]);
        assert_relative_eq!(mahalanobis(&y, &s).unwrap(), 5.0, epsilon = 1e-12);

        // diagonal scaling
        let s2 = DMatrix::from_diagonal(&DVector::from_row_slice(&[4.0, 9.0]));
        let y2 = DVector::from_row_slice(&[2.0, 3.0]);
        assert_relative_eq!(
            mahalanobis(&y2, &s2).unwrap(),
            2.0_f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn mahalanobis_rejects_indefinite_covariance() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let y = DVector::from_row_slice(&[1.0, 1.0]);
        assert!(mahalanobis(&y, &s).is_err());
    }

    #[test]
    fn chi_square_threshold_dof2() {
        // closed-form oracle at dof 2: quantile(1 - a) = -2 ln(a)
        let q = chi_square_quantile(0.99, 2).unwrap();
        assert_relative_eq!(q, -2.0 * 0.01_f64.ln(), epsilon = 1e-9);
        assert_relative_eq!(q, 9.210340, epsilon = 1e-5);
    }

    #[test]
    fn zero_distance_is_clean() {
        for alpha in [0.001, 0.01, 0.2, 0.9] {
            let rep = detect(0.0_f64, 5, alpha).unwrap();
            assert_eq!(rep.flag, DetectionFlag::Clean);
        }
    }

    #[test]
    fn flag_matches_threshold_comparison() {
        let rep = detect(4.0_f64, 2, 0.01).unwrap();
        assert_eq!(rep.flag, DetectionFlag::BadData); // 16 > 9.21
        let rep2 = detect(2.0_f64, 2, 0.01).unwrap();
        assert_eq!(rep2.flag, DetectionFlag::Clean); // 4 < 9.21
        assert_relative_eq!(rep.threshold, 9.210340_f64.sqrt(), epsilon = 1e-5);
    }
}
