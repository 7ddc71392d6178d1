//! Batch-mode regression over two consecutive measurement scans.
//!
//! Stacking the measurements (z_x at k-1, z_u at k-1, z_x at k) against the
//! joint unknowns (x, u) at k-1 gives an overdetermined linear system whose
//! weighted solution recovers states and unknown inputs with one step of
//! delay, along with the full joint covariance.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimation::kalman::JointEstimate;
use crate::estimation::MeasurementFrame;
use crate::linalg;
use crate::model::DiscreteModel;
use crate::observability::stacked_regressor;
use crate::scalar::Scalar;

/// The assembled regression: `rhs = O [x; u] + noise`, with block-diagonal
/// noise covariance `r_w = diag(R_x, R_u, E_x)` where `E_x = C Q C^T + R_x`
/// covers the propagated process noise in the newest scan.
#[derive(Clone, Debug)]
pub struct RegressionSystem<T> {
    pub o: DMatrix<T>,
    pub r_w: DMatrix<T>,
    pub rhs: DVector<T>,
    /// Step index of the estimated joint vector (the earlier scan).
    pub k: usize,
    pub n_states: usize,
    pub n_inputs: usize,
}

impl<T: Scalar> RegressionSystem<T> {
    pub fn rows(&self) -> usize {
        self.o.nrows()
    }

    pub fn unknowns(&self) -> usize {
        self.n_states + self.n_inputs
    }
}

/// Assembles the regression from the previous full scan and the current
/// branch-current scan.
pub fn assemble_regression<T: Scalar>(
    model: &DiscreteModel<T>,
    prev: &MeasurementFrame<T>,
    curr_zx: &DVector<T>,
) -> Result<RegressionSystem<T>> {
    let p = model.n_state_meas();
    let l = model.n_input_meas();
    if prev.z_x.len() != p {
        return Err(Error::Dimension {
            context: "z_x at k-1",
            expected: p,
            got: prev.z_x.len(),
        });
    }
    if prev.z_u.len() != l {
        return Err(Error::Dimension {
            context: "z_u at k-1",
            expected: l,
            got: prev.z_u.len(),
        });
    }
    if curr_zx.len() != p {
        return Err(Error::Dimension {
            context: "z_x at k",
            expected: p,
            got: curr_zx.len(),
        });
    }

    let o = stacked_regressor(model);
    let e_x = &model.c * &model.q * model.c.transpose() + &model.r_x;
    let r_w = linalg::block_diag(&[&model.r_x, &model.r_u, &e_x]);
    let rhs = linalg::stack_vectors(&[&prev.z_x, &prev.z_u, curr_zx]);
    Ok(RegressionSystem {
        o,
        r_w,
        rhs,
        k: prev.k,
        n_states: model.n_states(),
        n_inputs: model.n_inputs(),
    })
}

/// Weighted least-squares solution of the batch regression; the covariance is
/// the inverse normal matrix, computed through a whitened QR factorization.
pub fn solve_batch_wls<T: Scalar>(sys: &RegressionSystem<T>) -> Result<JointEstimate<T>> {
    let sol = linalg::wls_with_covariance(&sys.o, &sys.r_w, &sys.rhs)?;
    let x_hat = DVector::from(sol.estimate.rows(0, sys.n_states).clone_owned());
    let u_hat = DVector::from(sol.estimate.rows(sys.n_states, sys.n_inputs).clone_owned());
    JointEstimate::new(sys.k, x_hat, u_hat, sol.covariance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    /// Toy with one complex state and one complex input, full metering.
    fn toy_model(q_scale: f64) -> DiscreteModel<f64> {
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, -0.1, 0.9]);
        let b = DMatrix::from_row_slice(2, 2, &[0.05, 0.0, 0.0, 0.05]);
        let c = DMatrix::identity(2, 2);
        let d = DMatrix::identity(2, 2);
        let q = DMatrix::from_diagonal_element(2, 2, q_scale);
        let r_x = DMatrix::from_diagonal_element(2, 2, 0.01);
        let r_u = DMatrix::from_diagonal_element(2, 2, 0.02);
        DiscreteModel::new(a, b, c, d, q, r_x, r_u, 0.01).unwrap()
    }

    #[test]
    fn block_layout_shapes() {
        let model = toy_model(1e-4);
        let prev = MeasurementFrame::new(
            0,
            DVector::from_row_slice(&[1.0, 0.0]),
            DVector::from_row_slice(&[0.5, 0.5]),
        );
        let curr = DVector::from_row_slice(&[0.9, -0.1]);
        let sys = assemble_regression(&model, &prev, &curr).unwrap();
        assert_eq!(sys.o.shape(), (6, 4));
        assert_eq!(sys.r_w.shape(), (6, 6));
        // top-left block is C, middle block D, bottom [CA CB]
        assert_relative_eq!(sys.o.view((0, 0), (2, 2)).clone_owned(), model.c);
        assert_relative_eq!(sys.o.view((2, 2), (2, 2)).clone_owned(), model.d);
        assert_relative_eq!(sys.o.view((4, 0), (2, 2)).clone_owned(), model.a);
        assert_relative_eq!(sys.o.view((4, 2), (2, 2)).clone_owned(), model.b);
    }

    #[test]
    fn zero_q_makes_bottom_weight_equal_rx() {
        let model = toy_model(0.0);
        let prev = MeasurementFrame::new(0, DVector::zeros(2), DVector::zeros(2));
        let sys = assemble_regression(&model, &prev, &DVector::zeros(2)).unwrap();
        assert_relative_eq!(
            sys.r_w.view((4, 4), (2, 2)).clone_owned(),
            model.r_x,
            epsilon = 1e-15
        );
    }

    #[test]
    fn identity_dynamics_duplicate_selection_rows() {
        // C = I, A = I, B = 0: bottom block rows repeat the identity on x.
        let a = DMatrix::identity(2, 2);
        let b = DMatrix::zeros(2, 2);
        let c = DMatrix::identity(2, 2);
        let d = DMatrix::identity(2, 2);
        let q = DMatrix::zeros(2, 2);
        let r = DMatrix::from_diagonal_element(2, 2, 1.0);
        let model = DiscreteModel::new(a, b, c, d, q, r.clone(), r, 0.01).unwrap();
        let prev = MeasurementFrame::new(0, DVector::zeros(2), DVector::zeros(2));
        let sys = assemble_regression(&model, &prev, &DVector::zeros(2)).unwrap();
        assert_relative_eq!(
            sys.o.view((4, 0), (2, 2)).clone_owned(),
            sys.o.view((0, 0), (2, 2)).clone_owned()
        );
        assert_eq!(sys.o.view((4, 2), (2, 2)).clone_owned(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn dimension_mismatch_detected() {
        let model = toy_model(1e-4);
        let prev = MeasurementFrame::new(0, DVector::zeros(3), DVector::zeros(2));
        let err = assemble_regression(&model, &prev, &DVector::zeros(2)).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn noiseless_consistent_rhs_recovers_truth() {
        let model = toy_model(1e-4);
        let x = DVector::from_row_slice(&[0.7, -0.3]);
        let u = DVector::from_row_slice(&[1.1, 0.4]);
        let x_next = &model.a * &x + &model.b * &u;
        let prev = MeasurementFrame::new(4, x.clone(), u.clone());
        let sys = assemble_regression(&model, &prev, &(&model.c * x_next)).unwrap();
        let est = solve_batch_wls(&sys).unwrap();
        assert_eq!(est.k, 4);
        assert_relative_eq!(est.x_hat, x, max_relative = 1e-9);
        assert_relative_eq!(est.u_hat, u, max_relative = 1e-9);
    }

    #[test]
    fn stacked_identity_averages_measurement_copies() {
        let o = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
        let sys = RegressionSystem {
            o,
            r_w: DMatrix::identity(4, 4),
            rhs: DVector::from_row_slice(&[1.0, 2.0, 3.0, 4.0]),
            k: 0,
            n_states: 2,
            n_inputs: 0,
        };
        let est = solve_batch_wls(&sys).unwrap();
        assert_relative_eq!(est.x_hat[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(est.x_hat[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn matches_pseudo_inverse_oracle_on_random_observable_system() {
        // dense pseudo-inverse oracle: (O^T R^-1 O)^-1 O^T R^-1 z by explicit
        // inversion, kept independent of the QR path under test
        let model = toy_model(1e-4);
        let mut rhs_data = Vec::new();
        let mut state = 12345u64;
        for _ in 0..6 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            rhs_data.push(((state >> 33) as f64) / (u32::MAX as f64) - 0.5);
        }
        let prev = MeasurementFrame::new(
            0,
            DVector::from_row_slice(&rhs_data[0..2]),
            DVector::from_row_slice(&rhs_data[2..4]),
        );
        let curr = DVector::from_row_slice(&rhs_data[4..6]);
        let sys = assemble_regression(&model, &prev, &curr).unwrap();
        let est = solve_batch_wls(&sys).unwrap();

        let r_inv = sys.r_w.clone().try_inverse().unwrap();
        let normal = sys.o.transpose() * &r_inv * &sys.o;
        let p_oracle = normal.try_inverse().unwrap();
        let joint_oracle = &p_oracle * sys.o.transpose() * &r_inv * &sys.rhs;
        let joint = est.joint_vector();
        assert_relative_eq!(joint, joint_oracle, max_relative = 1e-8);
        assert_relative_eq!(est.p, p_oracle, max_relative = 1e-6);
    }

    #[test]
    fn unobservable_system_reports_rank() {
        // decoupled input with no voltage measurement: u never enters O
        let a = DMatrix::from_row_slice(1, 1, &[0.9]);
        let b = DMatrix::from_row_slice(1, 1, &[0.0]);
        let c = DMatrix::identity(1, 1);
        let d = DMatrix::zeros(0, 1);
        let q = DMatrix::zeros(1, 1);
        let r_x = DMatrix::from_diagonal_element(1, 1, 1.0);
        let r_u = DMatrix::zeros(0, 0);
        let model = DiscreteModel::new(a, b, c, d, q, r_x, r_u, 0.01).unwrap();
        let prev = MeasurementFrame::new(0, DVector::from_row_slice(&[1.0]), DVector::zeros(0));
        let sys = assemble_regression(&model, &prev, &DVector::from_row_slice(&[0.9])).unwrap();
        match solve_batch_wls(&sys) {
            Err(Error::Unobservable { rank, required }) => {
                assert_eq!(required, 2);
                assert!(rank < required);
            }
            other => panic!("expected unobservable error, got {other:?}"),
        }
    }
}
