//! Joint estimate container, covariance prediction/update, and the
//! centralized estimator step: solve the batch regression, predict through
//! the dynamics with the full joint covariance (cross terms included), then
//! update against the newest current scan with the optimal gain.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::estimation::regression::{assemble_regression, solve_batch_wls, RegressionSystem};
use crate::estimation::MeasurementFrame;
use crate::linalg::symmetrize;
use crate::model::DiscreteModel;
use crate::scalar::{from_f64, Scalar};

/// Joint state/input estimate at step `k` with the full joint covariance.
#[derive(Clone, Debug)]
pub struct JointEstimate<T> {
    pub k: usize,
    /// Branch-current estimate (2n, amperes).
    pub x_hat: DVector<T>,
    /// Bus-voltage estimate (2m, volts).
    pub u_hat: DVector<T>,
    /// Joint covariance with blocks [P_x, P_xu; P_ux, P_u].
    pub p: DMatrix<T>,
}

impl<T: Scalar> JointEstimate<T> {
    /// Validates symmetry and positive semidefiniteness of the covariance.
    pub fn new(k: usize, x_hat: DVector<T>, u_hat: DVector<T>, p: DMatrix<T>) -> Result<Self> {
        let dim = x_hat.len() + u_hat.len();
        if p.nrows() != dim || p.ncols() != dim {
            return Err(Error::Dimension {
                context: "joint covariance",
                expected: dim,
                got: p.nrows(),
            });
        }
        let scale = p.amax().max(T::one());
        let tol = from_f64::<T>(1e-8) * scale;
        for i in 0..dim {
            for j in (i + 1)..dim {
                if (p[(i, j)] - p[(j, i)]).abs() > tol {
                    return Err(Error::Numerical("joint covariance not symmetric".into()));
                }
            }
        }
        if dim > 0 {
            let eig = SymmetricEigen::new(symmetrize(&p));
            let floor = -from_f64::<T>(1e-10) * scale;
            if eig.eigenvalues.iter().any(|&e| e < floor) {
                return Err(Error::Numerical("joint covariance not PSD".into()));
            }
        }
        Ok(Self { k, x_hat, u_hat, p })
    }

    pub fn n_states(&self) -> usize {
        self.x_hat.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.u_hat.len()
    }

    /// Stacked [x; u].
    pub fn joint_vector(&self) -> DVector<T> {
        crate::linalg::stack_vectors(&[&self.x_hat, &self.u_hat])
    }

    pub fn p_x(&self) -> DMatrix<T> {
        let nx = self.n_states();
        self.p.view((0, 0), (nx, nx)).clone_owned()
    }

    pub fn p_xu(&self) -> DMatrix<T> {
        let nx = self.n_states();
        let nu = self.n_inputs();
        self.p.view((0, nx), (nx, nu)).clone_owned()
    }

    pub fn p_ux(&self) -> DMatrix<T> {
        let nx = self.n_states();
        let nu = self.n_inputs();
        self.p.view((nx, 0), (nu, nx)).clone_owned()
    }

    pub fn p_u(&self) -> DMatrix<T> {
        let nx = self.n_states();
        let nu = self.n_inputs();
        self.p.view((nx, nx), (nu, nu)).clone_owned()
    }
}

/// One-step state prediction with covariance.
#[derive(Clone, Debug)]
pub struct Prediction<T> {
    /// Predicted step index (estimate index + 1).
    pub k: usize,
    pub x_pred: DVector<T>,
    pub p_pred: DMatrix<T>,
}

/// Propagates the joint estimate through the dynamics:
/// `x_pred = A x + B u`, `P_pred = [A B] P [A B]^T + Q`, using the full joint
/// covariance including the cross blocks.
pub fn predict<T: Scalar>(model: &DiscreteModel<T>, est: &JointEstimate<T>) -> Prediction<T> {
    let x_pred = &model.a * &est.x_hat + &model.b * &est.u_hat;
    let nx = model.n_states();
    let nu = model.n_inputs();
    let mut ab = DMatrix::zeros(nx, nx + nu);
    ab.view_mut((0, 0), (nx, nx)).copy_from(&model.a);
    ab.view_mut((0, nx), (nx, nu)).copy_from(&model.b);
    let p_pred = symmetrize(&(&ab * &est.p * ab.transpose() + &model.q));
    Prediction {
        k: est.k + 1,
        x_pred,
        p_pred,
    }
}

/// Filtered state and covariance after the measurement update.
#[derive(Clone, Debug)]
pub struct Updated<T> {
    pub k: usize,
    pub x_hat: DVector<T>,
    pub p_x: DMatrix<T>,
}

/// Measurement update with the optimal gain
/// `K = P_pred C^T (C P_pred C^T + R_x)^{-1}`; the innovation covariance is
/// factorized, never inverted explicitly, and a non-SPD factorization is a
/// hard error.
pub fn update<T: Scalar>(
    model: &DiscreteModel<T>,
    pred: &Prediction<T>,
    z_x: &DVector<T>,
) -> Result<Updated<T>> {
    let p = model.n_state_meas();
    if z_x.len() != p {
        return Err(Error::Dimension {
            context: "z_x in update",
            expected: p,
            got: z_x.len(),
        });
    }
    let c = &model.c;
    let s = symmetrize(&(c * &pred.p_pred * c.transpose() + &model.r_x));
    let chol = nalgebra::Cholesky::new(s)
        .ok_or_else(|| Error::Numerical("innovation covariance not SPD".into()))?;
    // K^T = S^{-1} C P_pred
    let k_t = chol.solve(&(c * &pred.p_pred));
    let gain = k_t.transpose();
    let innovation = z_x - c * &pred.x_pred;
    let x_hat = &pred.x_pred + &gain * innovation;
    let nx = model.n_states();
    let p_x = symmetrize(&((DMatrix::identity(nx, nx) - &gain * c) * &pred.p_pred));
    Ok(Updated {
        k: pred.k,
        x_hat,
        p_x,
    })
}

/// Estimator state: the model plus the most recent estimate and prediction.
#[derive(Clone, Debug)]
pub struct FilterState<T> {
    pub model: DiscreteModel<T>,
    pub last_estimate: Option<JointEstimate<T>>,
    pub last_prediction: Option<Prediction<T>>,
}

impl<T: Scalar> FilterState<T> {
    pub fn new(model: DiscreteModel<T>) -> Self {
        Self {
            model,
            last_estimate: None,
            last_prediction: None,
        }
    }

    pub fn step(
        &mut self,
        prev: &MeasurementFrame<T>,
        curr: &MeasurementFrame<T>,
    ) -> Result<DsieStep<T>> {
        dsie_step(self, prev, curr)
    }
}

/// Output of one estimator step at time k: the delayed joint estimate at k-1,
/// the filtered state at k, and the assembled regression (for detection).
#[derive(Clone, Debug)]
pub struct DsieStep<T> {
    pub system: RegressionSystem<T>,
    pub estimate: JointEstimate<T>,
    pub prediction: Prediction<T>,
    pub filtered: Updated<T>,
}

/// One pass of the centralized estimator over two consecutive scans:
/// solve the batch regression for (x, u) at k-1, predict to k, update with
/// the newest current scan. The joint input/state estimate carries a one-step
/// delay by construction.
pub fn dsie_step<T: Scalar>(
    state: &mut FilterState<T>,
    prev: &MeasurementFrame<T>,
    curr: &MeasurementFrame<T>,
) -> Result<DsieStep<T>> {
    if curr.k != prev.k + 1 {
        return Err(Error::Synchronization(format!(
            "frames must be consecutive: got k = {} then {}",
            prev.k, curr.k
        )));
    }
    let system = assemble_regression(&state.model, prev, &curr.z_x)?;
    let estimate = solve_batch_wls(&system)?;
    let prediction = predict(&state.model, &estimate);
    let filtered = update(&state.model, &prediction, &curr.z_x)?;
    state.last_estimate = Some(estimate.clone());
    state.last_prediction = Some(prediction.clone());
    Ok(DsieStep {
        system,
        estimate,
        prediction,
        filtered,
    })
}
