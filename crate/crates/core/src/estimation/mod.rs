//! Batch-mode joint regression, Kalman prediction/update, the centralized
//! state-input estimator loop, and the WLS/TSE baselines.

pub mod baselines;
pub mod kalman;
pub mod regression;

pub use baselines::{static_wls_baseline, tse_step, QuasiStaticModel, TseFilter, TseStep};
pub use kalman::{
    dsie_step, predict, update, DsieStep, FilterState, JointEstimate, Prediction, Updated,
};
pub use regression::{assemble_regression, solve_batch_wls, RegressionSystem};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// One timestamped scan of PMU measurements: branch-current phasors `z_x`
/// (amperes) and bus-voltage phasors `z_u` (volts), stacked as (d, q) pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: nalgebra::Scalar + Serialize",
    deserialize = "T: nalgebra::Scalar + Deserialize<'de>"
))]
pub struct MeasurementFrame<T> {
    /// Step index.
    pub k: usize,
    pub z_x: DVector<T>,
    pub z_u: DVector<T>,
}

impl<T: Scalar> MeasurementFrame<T> {
    pub fn new(k: usize, z_x: DVector<T>, z_u: DVector<T>) -> Self {
        Self { k, z_x, z_u }
    }
}
