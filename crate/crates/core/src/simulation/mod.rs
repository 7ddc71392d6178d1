//! Ground-truth trajectory generation from scripted bus-voltage scenarios and
//! noisy PMU measurement streams.
//!
//! Bus voltages are exogenous scripted signals (piecewise segments plus step
//! events); branch currents follow the exact discrete recursion, so the
//! zero-order-hold discretization and the simulator agree by construction.
//! Every stream is a pure function of (config, seed): the process-noise and
//! measurement RNGs are independent ChaCha streams derived from one seed.

pub mod potsdam;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::MeasurementFrame;
use crate::model::DiscreteModel;
use crate::phasor::Phasor;
use crate::scalar::{from_f64, to_f64, Scalar};
use crate::topology::{BusId, NetworkTopology};
use crate::units::{Bases, NoiseSpec};

pub use crate::units::NoiseSpec as SimNoiseSpec;

/// One piecewise segment of a bus-voltage profile: value held from `start_s`,
/// optionally ramping linearly until the next knot.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Segment<T> {
    pub start_s: T,
    /// d-axis voltage (volts).
    pub vd: T,
    /// q-axis voltage (volts).
    pub vq: T,
    /// Optional (d, q) slope in volts per second.
    #[serde(default = "no_ramp")]
    pub ramp: Option<(T, T)>,
}

fn no_ramp<T>() -> Option<(T, T)> {
    None
}

/// Scripted profile for one bus.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BusProfile<T> {
    pub bus: BusId,
    pub segments: Vec<Segment<T>>,
}

/// Step change applied to several buses at one instant.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VoltageEvent<T> {
    pub time_s: T,
    /// (bus, new vd, new vq), volts.
    pub changes: Vec<(BusId, T, T)>,
}

/// Scripted bus-voltage scenario on a fixed grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario<T> {
    pub duration_s: T,
    pub dt_s: T,
    pub profiles: Vec<BusProfile<T>>,
    #[serde(default)]
    pub events: Vec<VoltageEvent<T>>,
}

impl<T: Scalar> Scenario<T> {
    /// Number of recursion steps (trajectory has `steps() + 1` samples).
    pub fn steps(&self) -> usize {
        (to_f64(self.duration_s) / to_f64(self.dt_s)).round() as usize
    }

    /// Step index of an event time on the scenario grid.
    pub fn step_of(&self, time_s: T) -> usize {
        (to_f64(time_s) / to_f64(self.dt_s)).round() as usize
    }

    /// Event onset steps, ascending.
    pub fn event_steps(&self) -> Vec<usize> {
        let mut steps: Vec<usize> = self.events.iter().map(|e| self.step_of(e.time_s)).collect();
        steps.sort_unstable();
        steps.dedup();
        steps
    }

    pub fn validate(&self, topology: &NetworkTopology<T>) -> Result<()> {
        if self.dt_s <= T::zero() || self.duration_s <= T::zero() {
            return Err(Error::Parameter("scenario needs positive dt and duration".into()));
        }
        let dt = to_f64(self.dt_s);
        for bus in topology.buses() {
            let profile = self
                .profiles
                .iter()
                .find(|p| p.bus == bus.id)
                .ok_or_else(|| {
                    Error::Config(format!("scenario has no profile for bus {}", bus.id))
                })?;
            let starts_at_zero = profile
                .segments
                .iter()
                .any(|s| to_f64(s.start_s).abs() < 1e-12);
            if !starts_at_zero {
                return Err(Error::Config(format!(
                    "profile of bus {} must start at t = 0",
                    bus.id
                )));
            }
        }
        for p in &self.profiles {
            topology.bus_index(p.bus).map_err(|_| {
                Error::Config(format!("profile bus {} not in topology", p.bus))
            })?;
        }
        for e in &self.events {
            let t = to_f64(e.time_s);
            let steps = t / dt;
            if (steps - steps.round()).abs() > 1e-6 {
                return Err(Error::Config(format!(
                    "event at t = {t} s is not on the dt = {dt} s grid"
                )));
            }
            for &(bus, _, _) in &e.changes {
                topology.bus_index(bus).map_err(|_| {
                    Error::Config(format!("event bus {bus} not in topology"))
                })?;
            }
        }
        Ok(())
    }

    /// Voltage of one bus at time t: the most recent knot wins, where knots
    /// are profile segments and event changes.
    pub fn voltage_at(&self, bus: BusId, t: T) -> Phasor<T> {
        let mut best_start = -T::one();
        let mut value = Phasor::zero();
        let mut ramp: Option<(T, T)> = None;
        if let Some(profile) = self.profiles.iter().find(|p| p.bus == bus) {
            for seg in &profile.segments {
                if seg.start_s <= t && seg.start_s > best_start {
                    best_start = seg.start_s;
                    value = Phasor::new(seg.vd, seg.vq);
                    ramp = seg.ramp;
                }
            }
        }
        for event in &self.events {
            if event.time_s <= t && event.time_s > best_start {
                for &(b, vd, vq) in &event.changes {
                    if b == bus {
                        best_start = event.time_s;
                        value = Phasor::new(vd, vq);
                        ramp = None;
                    }
                }
            }
        }
        if let Some((sd, sq)) = ramp {
            let elapsed = t - best_start;
            value = value + Phasor::new(sd * elapsed, sq * elapsed);
        }
        value
    }

    /// Stacked input vector u_k (all buses, topology order) at step k.
    pub fn input_vector(&self, topology: &NetworkTopology<T>, k: usize) -> DVector<T> {
        let t = from_f64::<T>(k as f64) * self.dt_s;
        let m = topology.n_buses();
        let mut u = DVector::zeros(2 * m);
        for (i, bus) in topology.buses().iter().enumerate() {
            let v = self.voltage_at(bus.id, t);
            u[2 * i] = v.re;
            u[2 * i + 1] = v.im;
        }
        u
    }
}

/// Simulated ground truth: states and inputs on the scenario grid, plus the
/// recorded process-noise draws when enabled, so the recursion
/// `x_{k+1} = A x_k + B u_k (+ w_k)` can be checked exactly.
#[derive(Clone, Debug)]
pub struct TruthTrajectory<T> {
    pub dt_s: T,
    /// x_0 .. x_N (branch currents, amperes).
    pub states: Vec<DVector<T>>,
    /// u_0 .. u_N (bus voltages, volts); u_k is held over [k, k+1).
    pub inputs: Vec<DVector<T>>,
    /// w_0 .. w_{N-1} when process noise was drawn.
    pub process_noise: Option<Vec<DVector<T>>>,
}

impl<T: Scalar> TruthTrajectory<T> {
    pub fn n_steps(&self) -> usize {
        self.states.len() - 1
    }
}

/// Per-branch sinusoidal steady state for the initial voltages:
/// `i = (v_from - v_to) / (R + j omega L)`.
pub fn steady_state_currents<T: Scalar>(
    topology: &NetworkTopology<T>,
    u: &DVector<T>,
) -> DVector<T> {
    let n = topology.n_branches();
    let mut x = DVector::zeros(2 * n);
    for (k, br) in topology.branches().iter().enumerate() {
        let from = topology.bus_index(br.from).expect("validated");
        let to = topology.bus_index(br.to).expect("validated");
        let dv = Phasor::new(u[2 * from] - u[2 * to], u[2 * from + 1] - u[2 * to + 1]);
        let i = dv / br.impedance(topology.omega());
        x[2 * k] = i.re;
        x[2 * k + 1] = i.im;
    }
    x
}

/// Advances the exact discrete recursion over the scenario grid. The initial
/// state is the steady state of the initial voltages; optional process noise
/// is drawn from the seeded generator (ChaCha stream 0) and recorded.
pub fn simulate_truth<T: Scalar>(
    model: &DiscreteModel<T>,
    topology: &NetworkTopology<T>,
    scenario: &Scenario<T>,
    process_noise: Option<&NoiseSpec<T>>,
    bases: &Bases<T>,
) -> Result<TruthTrajectory<T>> {
    scenario.validate(topology)?;
    if (to_f64(scenario.dt_s) - to_f64(model.dt)).abs() > 1e-12 {
        return Err(Error::Config(format!(
            "scenario dt {} does not match model dt {}",
            to_f64(scenario.dt_s),
            to_f64(model.dt)
        )));
    }
    let n_steps = scenario.steps();
    let mut inputs = Vec::with_capacity(n_steps + 1);
    for k in 0..=n_steps {
        inputs.push(scenario.input_vector(topology, k));
    }
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(steady_state_currents(topology, &inputs[0]));

    let mut noise_draws = None;
    let mut rng_and_sigma = match process_noise {
        Some(spec) if to_f64(spec.sigma2_q) > 0.0 => {
            let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
            rng.set_stream(0);
            let sigma = to_f64(spec.sigma2_q_si(bases)).sqrt();
            noise_draws = Some(Vec::with_capacity(n_steps));
            Some((rng, Normal::new(0.0, sigma).expect("valid sigma")))
        }
        _ => None,
    };

    let nx = model.n_states();
    for k in 0..n_steps {
        let mut next = &model.a * &states[k] + &model.b * &inputs[k];
        if let Some((rng, normal)) = rng_and_sigma.as_mut() {
            let mut w = DVector::zeros(nx);
            for c in 0..nx {
                w[c] = from_f64::<T>(normal.sample(rng));
            }
            next += &w;
            noise_draws.as_mut().expect("recording").push(w);
        }
        states.push(next);
    }
    Ok(TruthTrajectory {
        dt_s: scenario.dt_s,
        states,
        inputs,
        process_noise: noise_draws,
    })
}

/// Projects the truth through the sensor layout and adds seeded Gaussian
/// measurement noise (ChaCha stream 1). Same seed, same stream, bit for bit.
pub fn generate_measurements<T: Scalar>(
    truth: &TruthTrajectory<T>,
    model: &DiscreteModel<T>,
    noise: &NoiseSpec<T>,
    bases: &Bases<T>,
) -> Result<Vec<MeasurementFrame<T>>> {
    let p = model.n_state_meas();
    let l = model.n_input_meas();
    let mut rng = ChaCha12Rng::seed_from_u64(noise.seed);
    rng.set_stream(1);
    let sig_x = to_f64(noise.sigma2_x_si(bases)).sqrt();
    let sig_u = to_f64(noise.sigma2_u_si(bases)).sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut frames = Vec::with_capacity(truth.states.len());
    for (k, (x, u)) in truth.states.iter().zip(truth.inputs.iter()).enumerate() {
        let mut z_x = &model.c * x;
        for r in 0..p {
            z_x[r] += from_f64::<T>(sig_x * normal.sample(&mut rng));
        }
        let mut z_u = &model.d * u;
        for r in 0..l {
            z_u[r] += from_f64::<T>(sig_u * normal.sample(&mut rng));
        }
        frames.push(MeasurementFrame::new(k, z_x, z_u));
    }
    Ok(frames)
}
