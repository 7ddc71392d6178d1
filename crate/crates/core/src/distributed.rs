//! Per-area estimators with shared-input exchange and assimilation.
//!
//! Each step runs in synchronized phases: every area solves its local batch
//! regression, shared-bus voltage estimates are exchanged, incoming messages
//! pass a Mahalanobis gate, surviving ones are fused by one-shot WLS, and each
//! area finishes its predict/update with the assimilated joint estimate. Areas
//! own their state exclusively, so they can run on separate threads between
//! the exchange barriers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::detection::{detect, mahalanobis, DetectionFlag, DetectionReport};
use crate::error::{Error, Result};
use crate::estimation::{FilterState, JointEstimate, MeasurementFrame, Prediction, Updated};
use crate::linalg::{self, symmetrize};
use crate::model::DiscreteModel;
use crate::scalar::Scalar;

/// Shared-bus voltage estimate sent between neighboring estimators. The
/// vector holds (d, q) pairs in the pair's canonical shared-bus order;
/// serializable so a multi-process deployment can reuse the schema.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: nalgebra::Scalar + Serialize",
    deserialize = "T: nalgebra::Scalar + Deserialize<'de>"
))]
pub struct SharedInputMessage<T> {
    pub from_area: usize,
    pub to_area: usize,
    /// Step index of the estimate being shared.
    pub k: usize,
    /// Shared bus-voltage estimates (volts).
    pub u_shared: DVector<T>,
    /// Covariance of `u_shared`.
    pub p_shared: DMatrix<T>,
}

/// Selects the shared coordinates of a local estimate for a neighbor:
/// `u_shared = T u_hat`, `P_shared = T P_u T^T`.
pub fn extract_shared<T: Scalar>(
    est: &JointEstimate<T>,
    t: &DMatrix<T>,
    from_area: usize,
    to_area: usize,
) -> Result<SharedInputMessage<T>> {
    if t.ncols() != est.n_inputs() {
        return Err(Error::Dimension {
            context: "selection map",
            expected: est.n_inputs(),
            got: t.ncols(),
        });
    }
    let u_shared = t * &est.u_hat;
    let p_shared = symmetrize(&(t * est.p_u() * t.transpose()));
    Ok(SharedInputMessage {
        from_area,
        to_area,
        k: est.k,
        u_shared,
        p_shared,
    })
}

/// Assimilated estimate after fusing neighbor shared-input messages.
#[derive(Clone, Debug)]
pub struct FusedEstimate<T> {
    pub k: usize,
    pub x_f: DVector<T>,
    pub u_f: DVector<T>,
    pub p_f: DMatrix<T>,
}

impl<T: Scalar> FusedEstimate<T> {
    pub fn joint_estimate(&self) -> Result<JointEstimate<T>> {
        JointEstimate::new(self.k, self.x_f.clone(), self.u_f.clone(), self.p_f.clone())
    }
}

/// Builds the stacked fusion system: regressor rows [I 0; 0 I; 0 T_j ...],
/// block-diagonal weight diag(P_local, P_j ...), and the stacked right-hand
/// side [x; u; u_j ...].
fn fusion_system<T: Scalar>(
    local: &JointEstimate<T>,
    msgs: &[(&SharedInputMessage<T>, &DMatrix<T>)],
) -> Result<(DMatrix<T>, DMatrix<T>, DVector<T>)> {
    let nx = local.n_states();
    let nu = local.n_inputs();
    let mut rows = nx + nu;
    for (msg, t) in msgs {
        if msg.k != local.k {
            return Err(Error::Synchronization(format!(
                "message from area {} is for step {}, local step is {}",
                msg.from_area, msg.k, local.k
            )));
        }
        if t.ncols() != nu || t.nrows() != msg.u_shared.len() {
            return Err(Error::Dimension {
                context: "fusion selection map",
                expected: nu,
                got: t.ncols(),
            });
        }
        rows += msg.u_shared.len();
    }
    let cols = nx + nu;
    let mut s = DMatrix::zeros(rows, cols);
    s.view_mut((0, 0), (cols, cols))
        .copy_from(&DMatrix::identity(cols, cols));
    let mut r = DMatrix::zeros(rows, rows);
    r.view_mut((0, 0), (cols, cols)).copy_from(&local.p);
    let mut rhs = DVector::zeros(rows);
    rhs.rows_mut(0, nx).copy_from(&local.x_hat);
    rhs.rows_mut(nx, nu).copy_from(&local.u_hat);
    let mut at = cols;
    for (msg, t) in msgs {
        let dim = msg.u_shared.len();
        s.view_mut((at, nx), (dim, nu)).copy_from(t);
        r.view_mut((at, at), (dim, dim)).copy_from(&msg.p_shared);
        rhs.rows_mut(at, dim).copy_from(&msg.u_shared);
        at += dim;
    }
    Ok((s, r, rhs))
}

/// One-shot WLS fusion of the local joint estimate with neighbor shared-input
/// estimates. With no messages the local estimate is returned unchanged.
pub fn assimilate<T: Scalar>(
    local: &JointEstimate<T>,
    msgs: &[(&SharedInputMessage<T>, &DMatrix<T>)],
) -> Result<FusedEstimate<T>> {
    if msgs.is_empty() {
        return Ok(FusedEstimate {
            k: local.k,
            x_f: local.x_hat.clone(),
            u_f: local.u_hat.clone(),
            p_f: local.p.clone(),
        });
    }
    let (s, r, rhs) = fusion_system(local, msgs)?;
    let sol = linalg::wls_with_covariance(&s, &r, &rhs)?;
    let nx = local.n_states();
    let nu = local.n_inputs();
    Ok(FusedEstimate {
        k: local.k,
        x_f: sol.estimate.rows(0, nx).clone_owned(),
        u_f: sol.estimate.rows(nx, nu).clone_owned(),
        p_f: sol.covariance,
    })
}

/// Post-fusion residuals `y = [x; u; u_j ...] - S [x_f; u_f]` and their
/// covariance `S P_f S^T + R`.
pub fn assimilation_residual<T: Scalar>(
    local: &JointEstimate<T>,
    msgs: &[(&SharedInputMessage<T>, &DMatrix<T>)],
    fused: &FusedEstimate<T>,
) -> Result<(DVector<T>, DMatrix<T>)> {
    let (s, r, rhs) = fusion_system(local, msgs)?;
    let fused_joint = linalg::stack_vectors(&[&fused.x_f, &fused.u_f]);
    let y = rhs - &s * fused_joint;
    let cov = symmetrize(&(&s * &fused.p_f * s.transpose() + r));
    Ok((y, cov))
}

/// Link from one area toward a neighbor: the selection of this area's local
/// input vector onto the pair's canonical shared order.
#[derive(Clone, Debug)]
pub struct NeighborLink<T> {
    pub area: usize,
    pub selection: DMatrix<T>,
}

/// A local estimator: area id, filter over the local model, and the selection
/// maps toward each neighbor.
#[derive(Clone, Debug)]
pub struct AreaEstimator<T> {
    pub area: usize,
    pub filter: FilterState<T>,
    pub neighbors: Vec<NeighborLink<T>>,
}

impl<T: Scalar> AreaEstimator<T> {
    pub fn new(area: usize, model: DiscreteModel<T>, neighbors: Vec<NeighborLink<T>>) -> Self {
        Self {
            area,
            filter: FilterState::new(model),
            neighbors,
        }
    }
}

/// Gate decision for one incoming message.
#[derive(Clone, Debug)]
pub struct GateReport<T> {
    pub from_area: usize,
    pub report: DetectionReport<T>,
    pub accepted: bool,
}

/// Per-area output of one distributed step.
#[derive(Clone, Debug)]
pub struct AreaStepOutput<T> {
    pub area: usize,
    /// Local pre-fusion joint estimate at k-1.
    pub local: JointEstimate<T>,
    /// Assimilated estimate at k-1.
    pub fused: FusedEstimate<T>,
    pub prediction: Prediction<T>,
    /// Filtered local state at k.
    pub filtered: Updated<T>,
    pub gates: Vec<GateReport<T>>,
    /// True when a neighbor message was unavailable this step.
    pub degraded: bool,
}

/// In-process mailbox used for the per-step exchange; the schema matches what
/// a transport implementation would carry.
#[derive(Clone, Debug, Default)]
pub struct MessageBus<T> {
    messages: Vec<SharedInputMessage<T>>,
}

impl<T: Scalar> MessageBus<T> {
    pub fn new() -> Self {
        Self {
            messages: Vec::new(),
        }
    }

    pub fn send(&mut self, msg: SharedInputMessage<T>) {
        self.messages.push(msg);
    }

    pub fn take_for(&mut self, to_area: usize, k: usize) -> Vec<SharedInputMessage<T>> {
        let mut out = Vec::new();
        let mut rest = Vec::new();
        for m in self.messages.drain(..) {
            if m.to_area == to_area && m.k == k {
                out.push(m);
            } else {
                rest.push(m);
            }
        }
        self.messages = rest;
        out
    }
}

/// One synchronized distributed step over all areas.
///
/// Phases: local batch solve, exchange of shared-input estimates, Mahalanobis
/// gate at level `alpha` on each incoming message, assimilation, local
/// predict/update with the fused estimate. An area whose local solve fails
/// yields an error slot; its neighbors proceed without the missing message and
/// are flagged degraded.
pub fn distributed_step<T: Scalar>(
    estimators: &mut [AreaEstimator<T>],
    prev_frames: &[MeasurementFrame<T>],
    curr_frames: &[MeasurementFrame<T>],
    alpha: f64,
) -> Vec<Result<AreaStepOutput<T>>> {
    let n_areas = estimators.len();
    assert_eq!(prev_frames.len(), n_areas, "one frame pair per area");
    assert_eq!(curr_frames.len(), n_areas, "one frame pair per area");

    // Phase 1: local batch solves (barrier before any exchange).
    let mut locals: Vec<Result<JointEstimate<T>>> = Vec::with_capacity(n_areas);
    for (i, est) in estimators.iter().enumerate() {
        locals.push(
            crate::estimation::assemble_regression(
                &est.filter.model,
                &prev_frames[i],
                &curr_frames[i].z_x,
            )
            .and_then(|sys| crate::estimation::solve_batch_wls(&sys)),
        );
    }

    // Phase 2: exchange through the in-process bus.
    let mut bus = MessageBus::new();
    for (i, est) in estimators.iter().enumerate() {
        if let Ok(local) = &locals[i] {
            for link in &est.neighbors {
                if let Ok(msg) = extract_shared(local, &link.selection, i, link.area) {
                    bus.send(msg);
                }
            }
        }
    }

    // Phases 3-5 per area: gate, assimilate, predict/update.
    let mut outputs = Vec::with_capacity(n_areas);
    for (i, est) in estimators.iter_mut().enumerate() {
        let local = match &locals[i] {
            Ok(l) => l.clone(),
            Err(e) => {
                outputs.push(Err(Error::Numerical(format!(
                    "area {i} local solve failed: {e}"
                ))));
                continue;
            }
        };
        let incoming = bus.take_for(i, local.k);
        let degraded = incoming.len() < est.neighbors.len();
        outputs.push(area_fuse_and_filter(
            est,
            i,
            local,
            &incoming,
            &curr_frames[i],
            alpha,
            degraded,
        ));
    }
    outputs
}

fn area_fuse_and_filter<T: Scalar>(
    est: &mut AreaEstimator<T>,
    area: usize,
    local: JointEstimate<T>,
    incoming: &[SharedInputMessage<T>],
    curr: &MeasurementFrame<T>,
    alpha: f64,
    degraded: bool,
) -> Result<AreaStepOutput<T>> {
    // Gate each message against the local estimate of the same coordinates;
    // errors are independent across areas, so the difference has covariance
    // T P_u T^T + P_shared.
    let mut gates = Vec::new();
    let mut accepted_ids = Vec::new();
    for (idx, msg) in incoming.iter().enumerate() {
        let link = match est.neighbors.iter().find(|l| l.area == msg.from_area) {
            Some(l) => l,
            None => continue,
        };
        let diff = &msg.u_shared - &link.selection * &local.u_hat;
        let cov = symmetrize(
            &(&link.selection * local.p_u() * link.selection.transpose() + &msg.p_shared),
        );
        let report = detect(mahalanobis(&diff, &cov)?, diff.len(), alpha)?;
        let ok = report.flag == DetectionFlag::Clean;
        gates.push(GateReport {
            from_area: msg.from_area,
            report,
            accepted: ok,
        });
        if ok {
            accepted_ids.push(idx);
        }
    }

    let fused = {
        let pairs: Vec<(&SharedInputMessage<T>, &DMatrix<T>)> = accepted_ids
            .iter()
            .map(|&idx| {
                let msg = &incoming[idx];
                let link = est
                    .neighbors
                    .iter()
                    .find(|l| l.area == msg.from_area)
                    .expect("gated message has a link");
                (msg, &link.selection)
            })
            .collect();
        assimilate(&local, &pairs)?
    };

    let joint = fused.joint_estimate()?;
    let prediction = crate::estimation::predict(&est.filter.model, &joint);
    let filtered = crate::estimation::update(&est.filter.model, &prediction, &curr.z_x)?;
    est.filter.last_estimate = Some(joint);
    est.filter.last_prediction = Some(prediction.clone());
    Ok(AreaStepOutput {
        area,
        local,
        fused,
        prediction,
        filtered,
        gates,
        degraded,
    })
}
