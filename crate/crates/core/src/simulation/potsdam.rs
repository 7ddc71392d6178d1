//! Potsdam 13-bus microgrid preset: line data, four-area split, sensor
//! placement, default load-change scenario, and the reference attack case.

use crate::attack::AttackSpec;
use crate::model::MeasurementLayout;
use crate::partition::{AreaAssignment, AreaPartition};
use crate::scalar::{from_f64, Scalar};
use crate::simulation::{BusProfile, Scenario, Segment, VoltageEvent};
use crate::topology::{Branch, BranchId, Bus, BusId, NetworkTopology};
use crate::units::{Bases, NoiseSpec};

/// Per-mile series parameters of a distribution cable at 60 Hz.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct CableParams {
    pub r_ohm_per_mile: f64,
    pub x_ohm_per_mile: f64,
    /// Shunt susceptance, carried as metadata only; the line model drops it.
    pub susceptance_us_per_mile: f64,
}

/// 500 MCM underground cable.
pub const CABLE_500MCM: CableParams = CableParams {
    r_ohm_per_mile: 0.1558,
    x_ohm_per_mile: 0.1927,
    susceptance_us_per_mile: 253.54,
};

pub const FEET_PER_MILE: f64 = 5280.0;

/// Nominal line-to-line voltage (volts).
pub const NOMINAL_V: f64 = 13_200.0;

/// Chosen power base (volt-amperes); roughly the total installed load.
pub const S_BASE: f64 = 1.0e7;

/// (from, to, length in feet). The 2-13 line is oriented 13 -> 2 so that the
/// metered current is i_{13-2}.
const LINES: [(u32, u32, f64); 13] = [
    (1, 2, 3100.0),
    (2, 3, 4150.0),
    (3, 4, 125.0),
    (4, 5, 3350.0),
    (5, 6, 4350.0),
    (6, 7, 5425.0),
    (7, 9, 7025.0),
    (8, 9, 8100.0),
    (9, 10, 8200.0),
    (10, 11, 375.0),
    (11, 12, 400.0),
    (1, 12, 1950.0),
    (13, 2, 4150.0),
];

/// Branch sets of the four areas (indices into [`LINES`]).
const AREA_BRANCHES: [&[usize]; 4] = [
    &[0, 10, 11],    // area 1: buses 1, 2, 11, 12
    &[1, 2, 3, 12],  // area 2: buses 2, 3, 4, 5, 13
    &[4, 5, 6],      // area 3: buses 5, 6, 7, 9 (two-terminal interior)
    &[7, 8, 9],      // area 4: buses 8, 9, 10, 11
];

/// Buses hosting distributed generation units (voltage sensors live here).
const DGU_BUSES: [u32; 5] = [1, 8, 9, 10, 13];

/// Branches without current sensors: the area-3 interior.
const UNMETERED_BRANCHES: [usize; 3] = [4, 5, 6];

/// Nominal loads (bus, active kW, reactive kvar), carried as metadata; they do
/// not drive a power-flow solve.
pub const LOADS_KW_KVAR: [(u32, f64, f64); 11] = [
    (1, 4866.0, 3015.0),
    (2, 48.0, 30.0),
    (3, 144.0, 89.0),
    (4, 54.0, 33.0),
    (5, 560.0, 347.0),
    (6, 122.0, 76.0),
    (7, 142.0, 88.0),
    (9, 4166.0, 2582.0),
    (11, 48.0, 30.0),
    (12, 48.0, 30.0),
    (13, 83.0, 51.0),
];

/// DGU internal impedances (bus, ohms, millihenries), metadata only.
pub const DGU_IMPEDANCES: [(u32, f64, f64); 5] = [
    (1, 0.3, 7.8),
    (8, 0.4, 10.0),
    (9, 0.2, 4.4),
    (10, 1.0, 26.0),
    (13, 1.2, 29.0),
];

/// Everything needed to run experiments on the Potsdam network.
#[derive(Clone, Debug)]
pub struct PotsdamPreset<T> {
    pub topology: NetworkTopology<T>,
    /// Sensor placement of the four-area deployment: all branch currents
    /// except the area-3 interior, bus voltages at the DGU terminals.
    pub layout: MeasurementLayout,
    pub assignment: AreaAssignment,
    pub partition: AreaPartition,
    /// Default load-change scenario: 1 s at 100 Hz, steps every 0.1 s.
    pub scenario: Scenario<T>,
    pub bases: Bases<T>,
    /// Micro-PMU noise levels.
    pub noise: NoiseSpec<T>,
}

impl<T: Scalar> PotsdamPreset<T> {
    /// Layout with every branch current and bus voltage metered; centralized
    /// whole-network estimation needs this (the four-area placement leaves the
    /// area-3 interior uncovered).
    pub fn full_layout(&self) -> MeasurementLayout {
        MeasurementLayout::full(&self.topology)
    }
}

fn build_topology<T: Scalar>() -> NetworkTopology<T> {
    let omega = 2.0 * std::f64::consts::PI * 60.0;
    let buses = (1..=13)
        .map(|id| Bus {
            id: BusId(id),
            nominal_v: from_f64::<T>(NOMINAL_V),
        })
        .collect();
    let branches = LINES
        .iter()
        .map(|&(f, t, len_ft)| {
            let miles = len_ft / FEET_PER_MILE;
            let r = miles * CABLE_500MCM.r_ohm_per_mile;
            let l = miles * CABLE_500MCM.x_ohm_per_mile / omega;
            Branch {
                from: BusId(f),
                to: BusId(t),
                resistance: from_f64::<T>(r),
                inductance: from_f64::<T>(l),
            }
        })
        .collect();
    NetworkTopology::new(buses, branches, from_f64::<T>(omega)).expect("preset topology is valid")
}

fn fig5_layout() -> MeasurementLayout {
    let metered_branches = (0..LINES.len())
        .filter(|k| !UNMETERED_BRANCHES.contains(k))
        .map(BranchId)
        .collect();
    let metered_buses = DGU_BUSES.iter().map(|&b| BusId(b)).collect();
    MeasurementLayout::new(metered_branches, metered_buses)
}

/// Per-bus initial voltage: nominal magnitude with a small deterministic
/// feeder-profile spread (values chosen, not measured).
fn initial_voltage(bus: u32) -> (f64, f64) {
    let i = bus as f64;
    let magnitude = NOMINAL_V * (1.0 - 0.002 * ((bus % 7) as f64));
    let angle = 0.004 * ((bus % 5) as f64 - 2.0);
    (magnitude * angle.cos(), magnitude * angle.sin() + 0.0 * i)
}

/// Common-mode factor of each 0.1 s load-change event; magnitudes are in the
/// 5-8 percent range a weak islanded feeder can see under large load steps.
const EVENT_COMMON_MODE: [f64; 9] = [
    -0.08, 0.07, -0.06, 0.08, -0.07, 0.06, -0.05, 0.08, -0.06,
];

/// Deterministic per-bus jitter added to each event factor.
fn event_jitter(event: usize, bus: u32) -> f64 {
    let pattern = (7 * event + 5 * bus as usize) % 11;
    0.012 * (pattern as f64 / 5.0 - 1.0)
}

/// Default scenario: 1.0 s at 100 Hz; every 0.1 s all bus voltages step by a
/// common-mode factor plus per-bus jitter.
pub fn default_scenario<T: Scalar>() -> Scenario<T> {
    let mut running: Vec<(f64, f64)> = (1..=13).map(initial_voltage).collect();
    let profiles = (1..=13)
        .map(|bus| BusProfile {
            bus: BusId(bus),
            segments: vec![Segment {
                start_s: T::zero(),
                vd: from_f64(running[(bus - 1) as usize].0),
                vq: from_f64(running[(bus - 1) as usize].1),
                ramp: None,
            }],
        })
        .collect();
    let mut events = Vec::new();
    for (e, &common) in EVENT_COMMON_MODE.iter().enumerate() {
        let time = 0.1 * (e as f64 + 1.0);
        let mut changes = Vec::new();
        for bus in 1..=13u32 {
            let f = 1.0 + common + event_jitter(e, bus);
            let (vd, vq) = running[(bus - 1) as usize];
            let next = (vd * f, vq * f);
            running[(bus - 1) as usize] = next;
            changes.push((BusId(bus), from_f64::<T>(next.0), from_f64::<T>(next.1)));
        }
        events.push(VoltageEvent {
            time_s: from_f64(time),
            changes,
        });
    }
    Scenario {
        duration_s: from_f64(1.0),
        dt_s: from_f64(0.01),
        profiles,
        events,
    }
}

/// Flat scenario used for attack studies: constant initial profile, long
/// enough to cover an onset at 1.25 s.
pub fn attack_scenario<T: Scalar>(duration_s: f64) -> Scenario<T> {
    Scenario {
        duration_s: from_f64(duration_s),
        dt_s: from_f64(0.01),
        profiles: (1..=13)
            .map(|bus| {
                let (vd, vq) = initial_voltage(bus);
                BusProfile {
                    bus: BusId(bus),
                    segments: vec![Segment {
                        start_s: T::zero(),
                        vd: from_f64(vd),
                        vq: from_f64(vq),
                        ramp: None,
                    }],
                }
            })
            .collect(),
        events: vec![],
    }
}

/// Reference attack: raises the voltage estimates of buses 2, 3, 4, 13 by
/// [15+0.2i, 7.5+0.2i, 12.5+0.2i, 8.5+0.2i] x 100 V from 1.25 s onward.
pub fn attack_spec<T: Scalar>() -> AttackSpec<T> {
    AttackSpec {
        biases: vec![
            (BusId(2), from_f64(1500.0), from_f64(20.0)),
            (BusId(3), from_f64(750.0), from_f64(20.0)),
            (BusId(4), from_f64(1250.0), from_f64(20.0)),
            (BusId(13), from_f64(850.0), from_f64(20.0)),
        ],
        start_step: 125,
        end_step: 150,
    }
}

/// Builds the Potsdam preset: topology, four-area partition, Fig-5-style
/// sensor placement, default scenario, bases, and micro-PMU noise levels.
pub fn potsdam_preset<T: Scalar>() -> PotsdamPreset<T> {
    let topology = build_topology();
    let layout = fig5_layout();
    let assignment = AreaAssignment::new(
        AREA_BRANCHES
            .iter()
            .map(|set| set.iter().map(|&k| BranchId(k)).collect())
            .collect(),
    );
    let partition =
        AreaPartition::new(&topology, &layout, &assignment).expect("preset partition is valid");
    PotsdamPreset {
        topology,
        layout,
        assignment,
        partition,
        scenario: default_scenario(),
        bases: Bases::new(from_f64(NOMINAL_V), from_f64(S_BASE)).expect("valid bases"),
        noise: NoiseSpec::pmu_defaults(1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn thirteen_buses_thirteen_branches() {
        let preset = potsdam_preset::<f64>();
        assert_eq!(preset.topology.n_buses(), 13);
        assert_eq!(preset.topology.n_branches(), 13);
        let inc = preset.topology.incidence();
        assert_eq!(inc.entries.shape(), (13, 13));
        for k in 0..13 {
            let sum: i32 = (0..13).map(|i| i32::from(inc.entry(k, i))).sum();
            assert_eq!(sum, 0, "row {k} must sum to zero");
        }
    }

    #[test]
    fn short_line_resistance_from_length() {
        // 125 ft of 500 MCM: R = (125 / 5280) * 0.1558
        let preset = potsdam_preset::<f64>();
        let br = preset.topology.branch(BranchId(2));
        assert_eq!(br.from, BusId(3));
        assert_eq!(br.to, BusId(4));
        assert_relative_eq!(br.resistance, 125.0 / 5280.0 * 0.1558, epsilon = 1e-12);
        assert_relative_eq!(br.resistance, 3.688e-3, max_relative = 2e-4);
    }

    #[test]
    fn long_line_impedance() {
        // 4150 ft: Z ~ 0.1225 + j0.1515 ohm
        let preset = potsdam_preset::<f64>();
        let br = preset.topology.branch(BranchId(1));
        let z = br.impedance(preset.topology.omega());
        assert_relative_eq!(z.re, 0.1225, max_relative = 5e-4);
        assert_relative_eq!(z.im, 0.1515, max_relative = 5e-4);
    }

    #[test]
    fn four_areas_partition_all_branches() {
        let preset = potsdam_preset::<f64>();
        assert_eq!(preset.partition.n_areas(), 4);
        let mut count = 0;
        for a in preset.partition.areas() {
            count += a.branches.len();
        }
        assert_eq!(count, 13);
        // narrative couplings: bus 2 joins areas 1-2, bus 5 areas 2-3,
        // bus 9 areas 3-4, bus 11 areas 1-4
        assert_eq!(preset.partition.shared_buses(0, 1), &[BusId(2)]);
        assert_eq!(preset.partition.shared_buses(1, 2), &[BusId(5)]);
        assert_eq!(preset.partition.shared_buses(2, 3), &[BusId(9)]);
        assert_eq!(preset.partition.shared_buses(0, 3), &[BusId(11)]);
        assert!(preset.partition.shared_buses(0, 2).is_empty());
    }

    #[test]
    fn default_scenario_covers_grid_and_events() {
        let preset = potsdam_preset::<f64>();
        preset.scenario.validate(&preset.topology).unwrap();
        assert_eq!(preset.scenario.steps(), 100);
        assert_eq!(preset.scenario.events.len(), 9);
        let steps = preset.scenario.event_steps();
        assert_eq!(steps, vec![10, 20, 30, 40, 50, 60, 70, 80, 90]);
        // voltages stay within a plausible envelope
        for k in 0..=100 {
            let u = preset.scenario.input_vector(&preset.topology, k);
            for i in 0..13 {
                let mag = (u[2 * i].powi(2) + u[2 * i + 1].powi(2)).sqrt();
                assert!(mag > 0.8 * NOMINAL_V && mag < 1.2 * NOMINAL_V);
            }
        }
    }

    #[test]
    fn attack_targets_are_metered() {
        let preset = potsdam_preset::<f64>();
        let spec = attack_spec::<f64>();
        spec.validate(&preset.topology).unwrap();
        let a = crate::attack::build_fdia(&spec, &preset.topology, &preset.layout).unwrap();
        // exactly the three target-internal branches carry bias
        let mut biased = Vec::new();
        for &id in preset.layout.metered_branches() {
            if a.branch_component(&preset.layout, id).unwrap().abs() > 0.0 {
                biased.push(preset.topology.branch_label(id));
            }
        }
        assert_eq!(biased, vec!["2_3", "3_4", "13_2"]);
    }
}
