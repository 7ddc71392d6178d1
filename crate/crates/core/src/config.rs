//! JSON configuration files: topology, cables, sensors, areas, bases, noise,
//! scenario, and attack, in one document.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "omega_rad_s": 376.99111843077515,
//!   "buses": [{ "id": 1, "nominal_v": 13200.0 }],
//!   "branches": [
//!     { "from": 1, "to": 2, "length_ft": 3100, "cable": "500MCM" },
//!     { "from": 2, "to": 3, "r_ohm": 0.12, "l_h": 4.0e-4 }
//!   ],
//!   "cables": { "500MCM": { "r_ohm_per_mile": 0.1558, "x_ohm_per_mile": 0.1927,
//!                            "susceptance_us_per_mile": 253.54 } },
//!   "sensors": { "branches": [[1, 2]], "buses": [1] },
//!   "areas": [[[1, 2]], [[2, 3]]],
//!   "bases": { "v_base": 13200.0, "s_base": 1.0e7 },
//!   "noise": { "sigma2_x": 5e-4, "sigma2_u": 5e-4, "sigma2_q": 1e-4, "seed": 1 },
//!   "scenario": { "duration_s": 1.0, "dt_s": 0.01, "profiles": [...], "events": [...] },
//!   "attack": { "biases": [{ "bus": 2, "vd": 1500.0, "vq": 20.0 }],
//!                "start_step": 125, "end_step": 150 }
//! }
//! ```
//!
//! Branches are referenced by `[from, to]` pairs everywhere. The `500MCM`
//! cable is built in; `cables` adds or overrides entries.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attack::AttackSpec;
use crate::error::{Error, Result};
use crate::model::MeasurementLayout;
use crate::partition::AreaAssignment;
use crate::scalar::{from_f64, Scalar};
use crate::simulation::potsdam::{CableParams, CABLE_500MCM, FEET_PER_MILE};
use crate::simulation::{BusProfile, Scenario, Segment, VoltageEvent};
use crate::topology::{Branch, BranchId, Bus, BusId, NetworkTopology};
use crate::units::{Bases, NoiseSpec};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BusConfig {
    pub id: u32,
    pub nominal_v: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BranchConfig {
    pub from: u32,
    pub to: u32,
    /// Line length in feet, resolved against `cable`.
    #[serde(default)]
    pub length_ft: Option<f64>,
    #[serde(default)]
    pub cable: Option<String>,
    /// Direct series parameters; override length/cable when present.
    #[serde(default)]
    pub r_ohm: Option<f64>,
    #[serde(default)]
    pub l_h: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SensorsConfig {
    /// Metered branches as [from, to] pairs.
    #[serde(default)]
    pub branches: Vec<[u32; 2]>,
    /// Metered buses.
    #[serde(default)]
    pub buses: Vec<u32>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BasesConfig {
    pub v_base: f64,
    pub s_base: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub sigma2_x: f64,
    pub sigma2_u: f64,
    pub sigma2_q: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SegmentConfig {
    pub start_s: f64,
    pub vd: f64,
    pub vq: f64,
    #[serde(default)]
    pub ramp_d: Option<f64>,
    #[serde(default)]
    pub ramp_q: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProfileConfig {
    pub bus: u32,
    pub segments: Vec<SegmentConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EventChangeConfig {
    pub bus: u32,
    pub vd: f64,
    pub vq: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EventConfig {
    pub time_s: f64,
    pub changes: Vec<EventChangeConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub duration_s: f64,
    pub dt_s: f64,
    pub profiles: Vec<ProfileConfig>,
    #[serde(default)]
    pub events: Vec<EventConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttackBiasConfig {
    pub bus: u32,
    pub vd: f64,
    pub vq: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttackConfig {
    pub biases: Vec<AttackBiasConfig>,
    pub start_step: usize,
    pub end_step: usize,
}

/// Top-level config document.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemConfig {
    pub schema_version: u32,
    /// Synchronous angular frequency; defaults to 2 pi 60.
    #[serde(default)]
    pub omega_rad_s: Option<f64>,
    pub buses: Vec<BusConfig>,
    pub branches: Vec<BranchConfig>,
    #[serde(default)]
    pub cables: HashMap<String, CableParams>,
    pub sensors: SensorsConfig,
    /// Optional area split: per area, a list of [from, to] branch pairs.
    #[serde(default)]
    pub areas: Option<Vec<Vec<[u32; 2]>>>,
    pub bases: BasesConfig,
    pub noise: NoiseConfig,
    #[serde(default)]
    pub scenario: Option<ScenarioConfig>,
    #[serde(default)]
    pub attack: Option<AttackConfig>,
}

/// Domain objects resolved from a [`SystemConfig`].
#[derive(Clone, Debug)]
pub struct BuiltSystem<T> {
    pub topology: NetworkTopology<T>,
    pub layout: MeasurementLayout,
    pub assignment: Option<AreaAssignment>,
    pub bases: Bases<T>,
    pub noise: NoiseSpec<T>,
    pub scenario: Option<Scenario<T>>,
    pub attack: Option<AttackSpec<T>>,
}

impl SystemConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: SystemConfig = serde_json::from_str(&text)?;
        if config.schema_version != 1 {
            return Err(Error::Config(format!(
                "unsupported schema_version {}",
                config.schema_version
            )));
        }
        Ok(config)
    }

    fn cable(&self, name: &str) -> Result<CableParams> {
        if let Some(c) = self.cables.get(name) {
            return Ok(*c);
        }
        if name == "500MCM" {
            return Ok(CABLE_500MCM);
        }
        Err(Error::Config(format!("unknown cable type '{name}'")))
    }

    pub fn build<T: Scalar>(&self) -> Result<BuiltSystem<T>> {
        let omega = self
            .omega_rad_s
            .unwrap_or(2.0 * std::f64::consts::PI * 60.0);
        let buses = self
            .buses
            .iter()
            .map(|b| Bus {
                id: BusId(b.id),
                nominal_v: from_f64::<T>(b.nominal_v),
            })
            .collect();
        let mut branches = Vec::with_capacity(self.branches.len());
        for (i, bc) in self.branches.iter().enumerate() {
            let (r, l) = match (bc.r_ohm, bc.l_h, bc.length_ft, &bc.cable) {
                (Some(r), Some(l), _, _) => (r, l),
                (None, None, Some(len), Some(cable)) => {
                    let params = self.cable(cable)?;
                    let miles = len / FEET_PER_MILE;
                    (
                        miles * params.r_ohm_per_mile,
                        miles * params.x_ohm_per_mile / omega,
                    )
                }
                _ => {
                    return Err(Error::Config(format!(
                        "branch {i} ({}-{}) needs either r_ohm + l_h or length_ft + cable",
                        bc.from, bc.to
                    )))
                }
            };
            branches.push(Branch {
                from: BusId(bc.from),
                to: BusId(bc.to),
                resistance: from_f64::<T>(r),
                inductance: from_f64::<T>(l),
            });
        }
        let topology = NetworkTopology::new(buses, branches, from_f64::<T>(omega))?;

        let find_branch = |pair: &[u32; 2]| -> Result<BranchId> {
            topology
                .find_branch(BusId(pair[0]), BusId(pair[1]))
                .ok_or_else(|| {
                    Error::Config(format!("no branch between buses {} and {}", pair[0], pair[1]))
                })
        };
        let metered_branches = self
            .sensors
            .branches
            .iter()
            .map(&find_branch)
            .collect::<Result<Vec<_>>>()?;
        let metered_buses = self.sensors.buses.iter().map(|&b| BusId(b)).collect();
        let layout = MeasurementLayout::new(metered_branches, metered_buses);
        layout.validate(&topology)?;

        let assignment = match &self.areas {
            Some(areas) => {
                let sets = areas
                    .iter()
                    .map(|area| area.iter().map(&find_branch).collect::<Result<Vec<_>>>())
                    .collect::<Result<Vec<_>>>()?;
                Some(AreaAssignment::new(sets))
            }
            None => None,
        };

        let bases = Bases::new(
            from_f64::<T>(self.bases.v_base),
            from_f64::<T>(self.bases.s_base),
        )?;
        let noise = NoiseSpec::new(
            from_f64::<T>(self.noise.sigma2_x),
            from_f64::<T>(self.noise.sigma2_u),
            from_f64::<T>(self.noise.sigma2_q),
            self.noise.seed,
        )?;

        let scenario = self.scenario.as_ref().map(|sc| Scenario {
            duration_s: from_f64::<T>(sc.duration_s),
            dt_s: from_f64::<T>(sc.dt_s),
            profiles: sc
                .profiles
                .iter()
                .map(|p| BusProfile {
                    bus: BusId(p.bus),
                    segments: p
                        .segments
                        .iter()
                        .map(|s| Segment {
                            start_s: from_f64::<T>(s.start_s),
                            vd: from_f64::<T>(s.vd),
                            vq: from_f64::<T>(s.vq),
                            ramp: match (s.ramp_d, s.ramp_q) {
                                (None, None) => None,
                                (d, q) => Some((
                                    from_f64::<T>(d.unwrap_or(0.0)),
                                    from_f64::<T>(q.unwrap_or(0.0)),
                                )),
                            },
                        })
                        .collect(),
                })
                .collect(),
            events: sc
                .events
                .iter()
                .map(|e| VoltageEvent {
                    time_s: from_f64::<T>(e.time_s),
                    changes: e
                        .changes
                        .iter()
                        .map(|c| (BusId(c.bus), from_f64::<T>(c.vd), from_f64::<T>(c.vq)))
                        .collect(),
                })
                .collect(),
        });
        if let Some(sc) = &scenario {
            sc.validate(&topology)?;
        }

        let attack = self.attack.as_ref().map(|a| AttackSpec {
            biases: a
                .biases
                .iter()
                .map(|b| (BusId(b.bus), from_f64::<T>(b.vd), from_f64::<T>(b.vq)))
                .collect(),
            start_step: a.start_step,
            end_step: a.end_step,
        });
        if let Some(spec) = &attack {
            spec.validate(&topology)?;
        }

        Ok(BuiltSystem {
            topology,
            layout,
            assignment,
            bases,
            noise,
            scenario,
            attack,
        })
    }
}
