//! False-data-injection attack construction and injection.
//!
//! An attacker who knows the quasi-static measurement map can bias the
//! estimated bus voltages without disturbing static WLS residuals by adding
//! `a = H x_b` to the measurements. Two constructions are provided:
//!
//! * [`build_fdia`] biases only the branch-current measurements between
//!   targeted buses (the attacker's minimal H over the targeted subgraph);
//! * [`build_stealth_attack`] extends the same bias consistently across every
//!   metered signal the targets touch, which makes the attack provably
//!   invisible to a full-network static WLS.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::MeasurementFrame;
use crate::model::MeasurementLayout;
use crate::phasor::Phasor;
use crate::scalar::Scalar;
use crate::topology::{BusId, NetworkTopology};

/// Voltage bias (volts, dq phasor) per targeted bus plus the attack window.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttackSpec<T> {
    /// (bus, d-component bias, q-component bias), volts.
    pub biases: Vec<(BusId, T, T)>,
    /// Inclusive step window [start, end].
    pub start_step: usize,
    pub end_step: usize,
}

impl<T: Scalar> AttackSpec<T> {
    pub fn target_buses(&self) -> Vec<BusId> {
        self.biases.iter().map(|&(b, _, _)| b).collect()
    }

    pub fn bias_of(&self, bus: BusId) -> Option<Phasor<T>> {
        self.biases
            .iter()
            .find(|&&(b, _, _)| b == bus)
            .map(|&(_, d, q)| Phasor::new(d, q))
    }

    pub fn window_contains(&self, step: usize) -> bool {
        step >= self.start_step && step <= self.end_step
    }

    pub fn validate(&self, topology: &NetworkTopology<impl Scalar>) -> Result<()> {
        if self.biases.is_empty() {
            return Err(Error::Config("attack spec has no targets".into()));
        }
        if self.end_step < self.start_step {
            return Err(Error::Config("attack window ends before it starts".into()));
        }
        for &(bus, _, _) in &self.biases {
            topology
                .bus_index(bus)
                .map_err(|_| Error::Config(format!("attack target bus {bus} not in topology")))?;
        }
        Ok(())
    }
}

/// Additive measurement-space corruption aligned with frame rows.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackVector<T> {
    /// Bias on the branch-current rows (amperes).
    pub z_x: DVector<T>,
    /// Bias on the bus-voltage rows (volts).
    pub z_u: DVector<T>,
}

impl<T: Scalar> AttackVector<T> {
    /// Complex bias on a metered branch's current rows.
    pub fn branch_component(
        &self,
        layout: &MeasurementLayout,
        branch: crate::topology::BranchId,
    ) -> Option<Phasor<T>> {
        layout
            .branch_sensor_position(branch)
            .map(|pos| Phasor::new(self.z_x[2 * pos], self.z_x[2 * pos + 1]))
    }
}

/// Attack over the targeted subgraph: for every metered branch whose both
/// endpoints are targeted, the current bias is
/// `(x_b[from] - x_b[to]) / (R + j omega L)`. Every target bus must appear in
/// at least one such row, otherwise the attack is infeasible.
pub fn build_fdia<T: Scalar>(
    spec: &AttackSpec<T>,
    topology: &NetworkTopology<T>,
    layout: &MeasurementLayout,
) -> Result<AttackVector<T>> {
    spec.validate(topology)?;
    layout.validate(topology)?;
    let p = 2 * layout.metered_branches().len();
    let l = 2 * layout.metered_buses().len();
    let mut z_x = DVector::zeros(p);
    let mut covered: Vec<BusId> = Vec::new();
    for (pos, &id) in layout.metered_branches().iter().enumerate() {
        let br = topology.branch(id);
        let (Some(bias_from), Some(bias_to)) = (spec.bias_of(br.from), spec.bias_of(br.to))
        else {
            continue;
        };
        let a = (bias_from - bias_to) / br.impedance(topology.omega());
        z_x[2 * pos] = a.re;
        z_x[2 * pos + 1] = a.im;
        covered.push(br.from);
        covered.push(br.to);
    }
    for &(bus, _, _) in &spec.biases {
        if !covered.contains(&bus) {
            return Err(Error::AttackInfeasible(format!(
                "target bus {bus} has no metered branch to another target"
            )));
        }
    }
    Ok(AttackVector {
        z_x,
        z_u: DVector::zeros(l),
    })
}

/// Attack consistent with the full quasi-static measurement map: biases the
/// current rows of every metered branch incident to a target (zero-padding the
/// bias vector over untargeted buses) and the voltage rows of metered targets.
/// Static WLS residuals are unchanged by this construction and its estimates
/// shift by exactly the bias.
pub fn build_stealth_attack<T: Scalar>(
    spec: &AttackSpec<T>,
    topology: &NetworkTopology<T>,
    layout: &MeasurementLayout,
) -> Result<AttackVector<T>> {
    spec.validate(topology)?;
    layout.validate(topology)?;
    let p = 2 * layout.metered_branches().len();
    let l = 2 * layout.metered_buses().len();
    let mut z_x = DVector::zeros(p);
    for (pos, &id) in layout.metered_branches().iter().enumerate() {
        let br = topology.branch(id);
        let bias_from = spec.bias_of(br.from).unwrap_or_else(Phasor::zero);
        let bias_to = spec.bias_of(br.to).unwrap_or_else(Phasor::zero);
        if bias_from == Phasor::zero() && bias_to == Phasor::zero() {
            continue;
        }
        let a = (bias_from - bias_to) / br.impedance(topology.omega());
        z_x[2 * pos] = a.re;
        z_x[2 * pos + 1] = a.im;
    }
    let mut z_u = DVector::zeros(l);
    for (pos, &bus) in crate::model::metered_bus_order(layout, topology)?
        .iter()
        .enumerate()
    {
        if let Some(bias) = spec.bias_of(bus) {
            z_u[2 * pos] = bias.re;
            z_u[2 * pos + 1] = bias.im;
        }
    }
    Ok(AttackVector { z_x, z_u })
}

/// Adds the attack vector to every frame inside the window; frames outside it
/// are untouched and the input is never mutated.
pub fn inject<T: Scalar>(
    frames: &[MeasurementFrame<T>],
    attack: &AttackVector<T>,
    start_step: usize,
    end_step: usize,
) -> Result<Vec<MeasurementFrame<T>>> {
    if let Some(f) = frames.first() {
        if f.z_x.len() != attack.z_x.len() || f.z_u.len() != attack.z_u.len() {
            return Err(Error::Dimension {
                context: "attack vector",
                expected: f.z_x.len() + f.z_u.len(),
                got: attack.z_x.len() + attack.z_u.len(),
            });
        }
    }
    Ok(frames
        .iter()
        .map(|f| {
            if f.k >= start_step && f.k <= end_step {
                MeasurementFrame::new(f.k, &f.z_x + &attack.z_x, &f.z_u + &attack.z_u)
            } else {
                f.clone()
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{Branch, BranchId, Bus};
    use approx::assert_relative_eq;

    fn triangle() -> NetworkTopology<f64> {
        let omega = 2.0 * std::f64::consts::PI * 60.0;
        NetworkTopology::new(
            vec![
                Bus {
                    id: BusId(1),
                    nominal_v: 1.0,
                },
                Bus {
                    id: BusId(2),
                    nominal_v: 1.0,
                },
                Bus {
                    id: BusId(3),
                    nominal_v: 1.0,
                },
            ],
            vec![
                Branch {
                    from: BusId(1),
                    to: BusId(2),
                    resistance: 0.1,
                    inductance: 4e-4,
                },
                Branch {
                    from: BusId(2),
                    to: BusId(3),
                    resistance: 0.2,
                    inductance: 5e-4,
                },
            ],
            omega,
        )
        .unwrap()
    }

    #[test]
    fn zero_bias_gives_zero_vector() {
        let topo = triangle();
        let layout = MeasurementLayout::full(&topo);
        let spec = AttackSpec {
            biases: vec![(BusId(1), 0.0, 0.0), (BusId(2), 0.0, 0.0)],
            start_step: 0,
            end_step: 10,
        };
        let a = build_fdia(&spec, &topo, &layout).unwrap();
        assert_relative_eq!(a.z_x.norm(), 0.0);
    }

    #[test]
    fn equal_bias_on_both_ends_cancels() {
        let topo = triangle();
        let layout = MeasurementLayout::full(&topo);
        let spec = AttackSpec {
            biases: vec![(BusId(1), 100.0, 5.0), (BusId(2), 100.0, 5.0)],
            start_step: 0,
            end_step: 10,
        };
        let a = build_fdia(&spec, &topo, &layout).unwrap();
        let comp = a.branch_component(&layout, BranchId(0)).unwrap();
        assert_relative_eq!(comp.re, 0.0, epsilon = 1e-12);
        assert_relative_eq!(comp.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn component_is_difference_over_impedance() {
        let topo = triangle();
        let layout = MeasurementLayout::full(&topo);
        let spec = AttackSpec {
            biases: vec![(BusId(1), 100.0, 0.0), (BusId(2), 40.0, -10.0)],
            start_step: 0,
            end_step: 10,
        };
        let a = build_fdia(&spec, &topo, &layout).unwrap();
        let z = topo.branch(BranchId(0)).impedance(topo.omega());
        let oracle = Phasor::new(60.0, 10.0) / z;
        let comp = a.branch_component(&layout, BranchId(0)).unwrap();
        assert_relative_eq!(comp.re, oracle.re, epsilon = 1e-9);
        assert_relative_eq!(comp.im, oracle.im, epsilon = 1e-9);
        // untargeted branch rows stay clean in the subgraph construction
        let other = a.branch_component(&layout, BranchId(1)).unwrap();
        assert_relative_eq!(other.re, 0.0);
    }

    #[test]
    fn isolated_target_is_infeasible() {
        let topo = triangle();
        // only branch 1-2 metered; bus 3 has no metered branch to a target
        let layout = MeasurementLayout::new(vec![BranchId(0)], vec![BusId(1)]);
        let spec = AttackSpec {
            biases: vec![(BusId(1), 10.0, 0.0), (BusId(3), 10.0, 0.0)],
            start_step: 0,
            end_step: 10,
        };
        assert!(matches!(
            build_fdia(&spec, &topo, &layout),
            Err(Error::AttackInfeasible(_))
        ));
    }

    #[test]
    fn stealth_attack_biases_boundary_and_voltage_rows() {
        let topo = triangle();
        let layout = MeasurementLayout::full(&topo);
        let spec = AttackSpec {
            biases: vec![(BusId(2), 50.0, 0.0)],
            start_step: 0,
            end_step: 10,
        };
        let a = build_stealth_attack(&spec, &topo, &layout).unwrap();
        // both incident branches carry bias
        assert!(a.branch_component(&layout, BranchId(0)).unwrap().abs() > 0.0);
        assert!(a.branch_component(&layout, BranchId(1)).unwrap().abs() > 0.0);
        // voltage rows of bus 2 (second metered bus) carry the bias itself
        assert_relative_eq!(a.z_u[2], 50.0);
        assert_relative_eq!(a.z_u[3], 0.0);
    }

    #[test]
    fn inject_window_semantics_and_round_trip() {
        let topo = triangle();
        let layout = MeasurementLayout::full(&topo);
        let spec = AttackSpec {
            biases: vec![(BusId(1), 100.0, 0.0), (BusId(2), 40.0, -10.0)],
            start_step: 2,
            end_step: 3,
        };
        let a = build_fdia(&spec, &topo, &layout).unwrap();
        let frames: Vec<MeasurementFrame<f64>> = (0..5)
            .map(|k| MeasurementFrame::new(k, DVector::zeros(4), DVector::zeros(6)))
            .collect();
        let corrupted = inject(&frames, &a, 2, 3).unwrap();
        for f in &corrupted {
            let dirty = f.k >= 2 && f.k <= 3;
            assert_eq!(f.z_x.norm() > 0.0, dirty, "step {}", f.k);
        }
        // originals untouched
        assert!(frames.iter().all(|f| f.z_x.norm() == 0.0));

        // empty window (outside the run) changes nothing
        let untouched = inject(&frames, &a, 10, 20).unwrap();
        assert_eq!(untouched, frames);

        // add then subtract restores the stream
        let negated = AttackVector {
            z_x: -a.z_x.clone(),
            z_u: -a.z_u.clone(),
        };
        let restored = inject(&corrupted, &negated, 2, 3).unwrap();
        for (orig, back) in frames.iter().zip(restored.iter()) {
            assert_relative_eq!(orig.z_x, back.z_x, epsilon = 1e-12);
        }
    }
}
