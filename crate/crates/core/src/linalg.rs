//! Shared dense linear-algebra helpers: whitened weighted least squares and
//! symmetrization. Solves go through Cholesky/QR factorizations; normal
//! equations are never inverted explicitly.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::observability::matrix_rank;
use crate::scalar::{from_f64, Scalar};

/// Relative diagonal threshold used to declare a QR factor rank deficient.
const RANK_REL_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct WlsSolution<T> {
    pub estimate: DVector<T>,
    /// (H^T W H)^{-1}, symmetrized.
    pub covariance: DMatrix<T>,
}

/// Weighted least squares with the weight given as a noise covariance:
/// minimizes (z - Hx)^T R^{-1} (z - Hx). `noise_cov` must be SPD.
pub fn wls_with_covariance<T: Scalar>(
    h: &DMatrix<T>,
    noise_cov: &DMatrix<T>,
    z: &DVector<T>,
) -> Result<WlsSolution<T>> {
    let chol = nalgebra::Cholesky::new(noise_cov.clone())
        .ok_or_else(|| Error::Numerical("weight covariance is not SPD".into()))?;
    let l = chol.l();
    let wh = l
        .solve_lower_triangular(h)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let wz = l
        .solve_lower_triangular(z)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    whitened_least_squares(&wh, &wz, h)
}

/// Weighted least squares with the weight given directly as an SPD matrix W:
/// minimizes (z - Hx)^T W (z - Hx).
pub fn wls_with_weight<T: Scalar>(
    h: &DMatrix<T>,
    w: &DMatrix<T>,
    z: &DVector<T>,
) -> Result<WlsSolution<T>> {
    let chol = nalgebra::Cholesky::new(w.clone())
        .ok_or_else(|| Error::Numerical("weight matrix is not SPD".into()))?;
    let lt = chol.l().transpose();
    let wh = &lt * h;
    let wz = &lt * z;
    whitened_least_squares(&wh, &wz, h)
}

/// Solves the ordinary least-squares problem min |wh x - wz| by QR, with a
/// rank check on the triangular factor. `original` is only used to produce an
/// accurate rank in the error report.
fn whitened_least_squares<T: Scalar>(
    wh: &DMatrix<T>,
    wz: &DVector<T>,
    original: &DMatrix<T>,
) -> Result<WlsSolution<T>> {
    let cols = wh.ncols();
    if wh.nrows() < cols {
        return Err(Error::Unobservable {
            rank: matrix_rank(original, RANK_REL_TOL),
            required: cols,
        });
    }
    let qr = wh.clone().qr();
    let r = qr.r();
    let diag_max = (0..cols).fold(T::zero(), |acc, i| acc.max(r[(i, i)].abs()));
    let tol = from_f64::<T>(RANK_REL_TOL) * diag_max;
    if cols > 0 && (diag_max == T::zero() || (0..cols).any(|i| r[(i, i)].abs() <= tol)) {
        return Err(Error::Unobservable {
            rank: matrix_rank(original, RANK_REL_TOL),
            required: cols,
        });
    }
    let qtz = qr.q().transpose() * wz;
    let estimate = r
        .solve_upper_triangular(&qtz)
        .ok_or_else(|| Error::Numerical("singular triangular factor".into()))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(cols, cols))
        .ok_or_else(|| Error::Numerical("singular triangular factor".into()))?;
    let covariance = symmetrize(&(&r_inv * r_inv.transpose()));
    Ok(WlsSolution {
        estimate,
        covariance,
    })
}

/// (M + M^T) / 2.
pub fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    let half = from_f64::<T>(0.5);
    (m + m.transpose()).scale(half)
}

/// Block-diagonal assembly.
pub fn block_diag<T: Scalar>(blocks: &[&DMatrix<T>]) -> DMatrix<T> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Vertical stacking of vectors.
pub fn stack_vectors<T: Scalar>(parts: &[&DVector<T>]) -> DVector<T> {
    let len: usize = parts.iter().map(|v| v.len()).sum();
    let mut out = DVector::zeros(len);
    let mut at = 0;
    for v in parts {
        out.rows_mut(at, v.len()).copy_from(*v);
        at += v.len();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_weight_reduces_to_ordinary_ls() {
        let h = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let z = DVector::from_row_slice(&[1.0, 2.0, 3.1]);
        let w = DMatrix::identity(3, 3);
        let sol = wls_with_weight(&h, &w, &z).unwrap();
        // normal-equation oracle by explicit inversion
        let ninv = (h.transpose() * &h).try_inverse().unwrap();
        let oracle = &ninv * h.transpose() * &z;
        assert_relative_eq!(sol.estimate, oracle, epsilon = 1e-12);
        assert_relative_eq!(sol.covariance, ninv, epsilon = 1e-12);
    }

    #[test]
    fn covariance_and_weight_forms_agree() {
        let h = DMatrix::from_row_slice(4, 2, &[1.0, 0.2, 0.0, 1.0, 1.0, 1.0, 2.0, -1.0]);
        let z = DVector::from_row_slice(&[0.3, -1.0, 2.0, 0.7]);
        let cov = DMatrix::from_diagonal(&DVector::from_row_slice(&[0.5, 2.0, 1.0, 4.0]));
        let w = cov.clone().try_inverse().unwrap();
        let a = wls_with_covariance(&h, &cov, &z).unwrap();
        let b = wls_with_weight(&h, &w, &z).unwrap();
        assert_relative_eq!(a.estimate, b.estimate, epsilon = 1e-10);
        assert_relative_eq!(a.covariance, b.covariance, epsilon = 1e-10);
    }

    #[test]
    fn rank_deficiency_reports_rank() {
        let h = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, -1.0, -1.0]);
        let z = DVector::from_row_slice(&[0.0, 0.0, 0.0]);
        let w = DMatrix::identity(3, 3);
        match wls_with_weight(&h, &w, &z) {
            Err(Error::Unobservable { rank, required }) => {
                assert_eq!(rank, 1);
                assert_eq!(required, 2);
            }
            other => panic!("expected rank error, got {other:?}"),
        }
    }
}
