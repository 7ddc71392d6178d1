//! Experiment runner: simulate, optionally attack, run the selected
//! estimators on one shared measurement stream, and collect per-step metrics
//! plus a summary.

use nalgebra::DVector;

use crate::attack::{build_stealth_attack, inject, AttackSpec};
use crate::detection::{self, DetectionFlag};
use crate::distributed::{distributed_step, AreaEstimator, NeighborLink};
use crate::error::{Error, Result};
use crate::estimation::{
    tse_step, FilterState, MeasurementFrame, QuasiStaticModel, TseFilter,
};
use crate::model::{DiscreteModel, MeasurementLayout};
use crate::observability::check_observability;
use crate::partition::AreaAssignment;
use crate::phasor::Phasor;
use crate::scalar::{from_f64, to_f64, Scalar};
use crate::simulation::{generate_measurements, simulate_truth, Scenario, TruthTrajectory};
use crate::topology::NetworkTopology;
use crate::units::{Bases, NoiseSpec};

/// Mean squared voltage-estimate error in per-unit squared:
/// `(1/m) sum |u_hat_i - u_i|^2` over the m complex bus voltages, with the
/// vectors given in stacked (d, q) real form.
pub fn mse<T: Scalar>(u_hat: &DVector<T>, u_true: &DVector<T>, bases: &Bases<T>) -> Result<T> {
    if u_hat.len() != u_true.len() {
        return Err(Error::Dimension {
            context: "mse",
            expected: u_true.len(),
            got: u_hat.len(),
        });
    }
    if u_hat.len() % 2 != 0 || u_hat.is_empty() {
        return Err(Error::Dimension {
            context: "mse (stacked dq pairs)",
            expected: u_hat.len() + 1,
            got: u_hat.len(),
        });
    }
    let m = from_f64::<T>((u_hat.len() / 2) as f64);
    let mut acc = T::zero();
    for i in 0..u_hat.len() {
        let e = bases.voltage_to_pu(u_hat[i] - u_true[i]);
        acc += e * e;
    }
    Ok(acc / m)
}

/// Phase-equivalent apparent power `S = v * conj(i)` (volt-amperes).
pub fn terminal_power<T: Scalar>(v: Phasor<T>, i: Phasor<T>) -> Phasor<T> {
    v * i.conj()
}

/// Injected current at every bus: the signed sum of incident branch currents
/// through the incidence column (positive = flowing out of the bus into the
/// network).
pub fn bus_injections<T: Scalar>(
    topology: &NetworkTopology<T>,
    x: &DVector<T>,
) -> Vec<Phasor<T>> {
    let inc = topology.incidence();
    (0..topology.n_buses())
        .map(|i| {
            let mut s = Phasor::zero();
            for k in 0..topology.n_branches() {
                let sign = from_f64::<T>(f64::from(inc.entry(k, i)));
                if sign != T::zero() {
                    s = s + Phasor::new(x[2 * k], x[2 * k + 1]).scale(sign);
                }
            }
            s
        })
        .collect()
}

/// Apparent power delivered at every bus terminal from a voltage vector and a
/// branch-current vector (both stacked dq).
pub fn terminal_powers<T: Scalar>(
    topology: &NetworkTopology<T>,
    u: &DVector<T>,
    x: &DVector<T>,
) -> Vec<Phasor<T>> {
    bus_injections(topology, x)
        .into_iter()
        .enumerate()
        .map(|(i, inj)| terminal_power(Phasor::new(u[2 * i], u[2 * i + 1]), inj))
        .collect()
}

/// Selected estimator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    /// Centralized joint state-input estimator.
    Sie,
    /// Per-scan static weighted least squares.
    Wls,
    /// Tracking state estimation (random-walk Kalman filter).
    Tse,
    /// Multi-area state-input estimation with assimilation.
    DistributedSie,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Sie => "sie",
            EstimatorKind::Wls => "wls",
            EstimatorKind::Tse => "tse",
            EstimatorKind::DistributedSie => "dsie",
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sie" => Ok(EstimatorKind::Sie),
            "wls" => Ok(EstimatorKind::Wls),
            "tse" => Ok(EstimatorKind::Tse),
            "dsie" | "distributed" | "distributed-sie" => Ok(EstimatorKind::DistributedSie),
            other => Err(Error::Config(format!("unknown estimator '{other}'"))),
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Fully resolved experiment description.
#[derive(Clone, Debug)]
pub struct ExperimentConfig<T> {
    pub topology: NetworkTopology<T>,
    pub layout: MeasurementLayout,
    pub bases: Bases<T>,
    pub noise: NoiseSpec<T>,
    pub scenario: Scenario<T>,
    pub estimators: Vec<EstimatorKind>,
    /// Area split; required when the distributed estimator is selected.
    pub assignment: Option<AreaAssignment>,
    pub attack: Option<AttackSpec<T>>,
    /// Bad-data test level.
    pub alpha: f64,
    /// TSE random-walk process variance in per-unit.
    pub q_tse_pu: T,
}

/// Per-estimator values of one metrics row; `None` marks "not produced at
/// this step" (warm-up, delay, or uncovered).
#[derive(Clone, Debug)]
pub struct EstimatorStepMetrics<T> {
    pub mse_pu2: Option<T>,
    pub d_m: Option<T>,
    pub bad_data: Option<bool>,
}

/// One metrics row per simulated step.
#[derive(Clone, Debug)]
pub struct MetricsRow<T> {
    pub step: usize,
    pub time_s: T,
    pub attack_active: bool,
    /// Aligned with the experiment's estimator list.
    pub per_estimator: Vec<EstimatorStepMetrics<T>>,
}

/// Per-step estimates for the estimates CSV: bus-voltage vectors per
/// estimator (entries may be absent for uncovered buses) and the centralized
/// branch-current estimate when available.
#[derive(Clone, Debug)]
pub struct EstimatesRow<T> {
    pub step: usize,
    pub time_s: T,
    /// Per estimator: per complex bus, optional (d, q).
    pub voltages: Vec<Vec<Option<(T, T)>>>,
    /// Centralized branch-current estimate (stacked dq) when SIE ran.
    pub sie_currents: Option<DVector<T>>,
}

#[derive(Clone, Debug)]
pub struct EstimatorSummary<T> {
    pub kind: EstimatorKind,
    pub mean_mse_pu2: T,
    pub max_mse_pu2: T,
    pub steps_with_mse: usize,
    /// Bad-data flags outside the attack window.
    pub false_alarms: usize,
    /// Steps from attack onset to the first in-window flag.
    pub detection_latency: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Summary<T> {
    pub per_estimator: Vec<EstimatorSummary<T>>,
    pub notes: Vec<String>,
}

/// Full output of one experiment run; CSV writing lives in [`crate::csv_io`].
#[derive(Clone, Debug)]
pub struct ExperimentOutput<T> {
    pub estimators: Vec<EstimatorKind>,
    pub metrics: Vec<MetricsRow<T>>,
    pub estimates: Vec<EstimatesRow<T>>,
    pub summary: Summary<T>,
    pub truth: TruthTrajectory<T>,
    /// The measurement stream the estimators consumed (post-attack).
    pub frames: Vec<MeasurementFrame<T>>,
    pub event_steps: Vec<usize>,
}

struct EstimatorColumns<T> {
    voltage: Vec<Option<DVector<T>>>,
    /// Which complex buses the voltage entries cover (None = all).
    covered: Option<Vec<bool>>,
    d_m: Vec<Option<T>>,
    flag: Vec<Option<bool>>,
    currents: Vec<Option<DVector<T>>>,
}

impl<T: Scalar> EstimatorColumns<T> {
    fn new(rows: usize) -> Self {
        Self {
            voltage: vec![None; rows],
            covered: None,
            d_m: vec![None; rows],
            flag: vec![None; rows],
            currents: vec![None; rows],
        }
    }
}

/// Runs every selected estimator on the same simulated measurement stream.
/// Deterministic for a fixed config and seed.
pub fn run_experiment<T: Scalar>(config: &ExperimentConfig<T>) -> Result<ExperimentOutput<T>> {
    if config.estimators.is_empty() {
        return Err(Error::Config("no estimators selected".into()));
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::Config("alpha must be in (0, 1)".into()));
    }
    let mut estimators = config.estimators.clone();
    estimators.dedup();
    let mut notes = Vec::new();

    let model = DiscreteModel::build(
        &config.topology,
        &config.layout,
        config.scenario.dt_s,
        &config.noise,
        &config.bases,
    )?;

    // Observability gate for the centralized estimators.
    let needs_central = estimators
        .iter()
        .any(|e| matches!(e, EstimatorKind::Sie | EstimatorKind::Wls | EstimatorKind::Tse));
    if needs_central {
        let report = check_observability(&model);
        if !report.observable {
            if estimators.contains(&EstimatorKind::DistributedSie) {
                notes.push(format!(
                    "centralized estimators dropped: rank {} < required {}",
                    report.rank, report.required
                ));
                estimators.retain(|e| matches!(e, EstimatorKind::DistributedSie));
            } else {
                return Err(Error::Unobservable {
                    rank: report.rank,
                    required: report.required,
                });
            }
        }
    }

    // Ground truth and the shared measurement stream.
    let truth = simulate_truth(
        &model,
        &config.topology,
        &config.scenario,
        Some(&config.noise),
        &config.bases,
    )?;
    let clean_frames = generate_measurements(&truth, &model, &config.noise, &config.bases)?;
    let frames = match &config.attack {
        Some(spec) => {
            let vector = build_stealth_attack(spec, &config.topology, &config.layout)?;
            inject(&clean_frames, &vector, spec.start_step, spec.end_step)?
        }
        None => clean_frames,
    };

    let n_steps = truth.n_steps();
    let rows = n_steps + 1;
    let m_buses = config.topology.n_buses();

    let mut columns: Vec<EstimatorColumns<T>> = Vec::new();
    for kind in &estimators {
        let col = match kind {
            EstimatorKind::Sie => run_sie(config, &model, &frames, rows)?,
            EstimatorKind::Wls => run_wls(config, &frames, rows)?,
            EstimatorKind::Tse => run_tse(config, &frames, rows)?,
            EstimatorKind::DistributedSie => {
                run_distributed(config, &frames, rows, &mut notes)?
            }
        };
        columns.push(col);
    }

    // Assemble rows.
    let mut metrics = Vec::with_capacity(rows);
    let mut estimates = Vec::with_capacity(rows);
    for step in 0..rows {
        let time_s = from_f64::<T>(step as f64) * config.scenario.dt_s;
        let attack_active = config
            .attack
            .as_ref()
            .map(|a| a.window_contains(step))
            .unwrap_or(false);
        let mut per_estimator = Vec::with_capacity(estimators.len());
        let mut voltages = Vec::with_capacity(estimators.len());
        let mut sie_currents = None;
        for (e, col) in columns.iter().enumerate() {
            let mse_pu2 = match &col.voltage[step] {
                Some(v) => Some(masked_mse(
                    v,
                    &truth.inputs[step],
                    col.covered.as_deref(),
                    &config.bases,
                )?),
                None => None,
            };
            per_estimator.push(EstimatorStepMetrics {
                mse_pu2,
                d_m: col.d_m[step],
                bad_data: col.flag[step],
            });
            voltages.push(match &col.voltage[step] {
                Some(v) => (0..m_buses)
                    .map(|i| {
                        let covered = col.covered.as_ref().map(|c| c[i]).unwrap_or(true);
                        covered.then(|| (v[2 * i], v[2 * i + 1]))
                    })
                    .collect(),
                None => vec![None; m_buses],
            });
            if estimators[e] == EstimatorKind::Sie {
                sie_currents = col.currents[step].clone();
            }
        }
        metrics.push(MetricsRow {
            step,
            time_s,
            attack_active,
            per_estimator,
        });
        estimates.push(EstimatesRow {
            step,
            time_s,
            voltages,
            sie_currents,
        });
    }

    let summary = summarize(&estimators, &metrics, config.attack.as_ref(), notes);
    Ok(ExperimentOutput {
        estimators,
        metrics,
        estimates,
        summary,
        truth,
        frames,
        event_steps: config.scenario.event_steps(),
    })
}

/// MSE over the covered complex coordinates only.
fn masked_mse<T: Scalar>(
    u_hat: &DVector<T>,
    u_true: &DVector<T>,
    covered: Option<&[bool]>,
    bases: &Bases<T>,
) -> Result<T> {
    match covered {
        None => mse(u_hat, u_true, bases),
        Some(mask) => {
            let mut acc = T::zero();
            let mut m = 0usize;
            for (i, &c) in mask.iter().enumerate() {
                if c {
                    for idx in [2 * i, 2 * i + 1] {
                        let e = bases.voltage_to_pu(u_hat[idx] - u_true[idx]);
                        acc += e * e;
                    }
                    m += 1;
                }
            }
            if m == 0 {
                return Err(Error::Config("no covered buses for MSE".into()));
            }
            Ok(acc / from_f64::<T>(m as f64))
        }
    }
}

fn run_sie<T: Scalar>(
    config: &ExperimentConfig<T>,
    model: &DiscreteModel<T>,
    frames: &[MeasurementFrame<T>],
    rows: usize,
) -> Result<EstimatorColumns<T>> {
    let mut col = EstimatorColumns::new(rows);
    let mut state = FilterState::new(model.clone());
    for k in 1..rows {
        let step = state.step(&frames[k - 1], &frames[k])?;
        // the joint estimate is for step k-1
        col.voltage[k - 1] = Some(step.estimate.u_hat.clone());
        col.currents[k - 1] = Some(step.estimate.x_hat.clone());
        // window statistic attributed to the newest scan k
        let innov = detection::innovation(&step.system, &step.estimate)?;
        let d = detection::mahalanobis(&innov.y, &innov.s)?;
        let report = detection::detect(d, step.system.rows(), config.alpha)?;
        col.d_m[k] = Some(d);
        col.flag[k] = Some(report.flag == DetectionFlag::BadData);
    }
    Ok(col)
}

fn run_wls<T: Scalar>(
    config: &ExperimentConfig<T>,
    frames: &[MeasurementFrame<T>],
    rows: usize,
) -> Result<EstimatorColumns<T>> {
    let qsm = QuasiStaticModel::build(
        &config.topology,
        &config.layout,
        &config.noise,
        &config.bases,
    )?;
    let weight = qsm.weight();
    let dof = qsm.h.nrows().saturating_sub(qsm.h.ncols());
    let mut col = EstimatorColumns::new(rows);
    for k in 0..rows {
        let z = qsm.stack_frame(&frames[k])?;
        let v_hat = crate::estimation::static_wls_baseline(&qsm.h, &weight, &z)?;
        let r = detection::residual_static(&z, &qsm.h, &v_hat)?;
        // classical weighted residual statistic, chi-square with rows - cols dof
        let d = r.dot(&(&weight * &r)).max(T::zero()).sqrt();
        col.voltage[k] = Some(v_hat);
        col.d_m[k] = Some(d);
        col.flag[k] = Some(if dof == 0 {
            false
        } else {
            detection::detect(d, dof, config.alpha)?.flag == DetectionFlag::BadData
        });
    }
    Ok(col)
}

fn run_tse<T: Scalar>(
    config: &ExperimentConfig<T>,
    frames: &[MeasurementFrame<T>],
    rows: usize,
) -> Result<EstimatorColumns<T>> {
    let qsm = QuasiStaticModel::build(
        &config.topology,
        &config.layout,
        &config.noise,
        &config.bases,
    )?;
    let q_si = config.q_tse_pu * config.bases.v_base * config.bases.v_base;
    let mut filter = TseFilter::initialize(&qsm, q_si, &frames[0])?;
    let mut col = EstimatorColumns::new(rows);
    col.voltage[0] = Some(filter.v_hat.clone());
    for k in 1..rows {
        let step = tse_step(&mut filter, &qsm, &frames[k])?;
        col.voltage[k] = Some(step.v_hat.clone());
        let d = detection::mahalanobis(&step.innovation, &step.innovation_cov)?;
        let report = detection::detect(d, step.innovation.len(), config.alpha)?;
        col.d_m[k] = Some(d);
        col.flag[k] = Some(report.flag == DetectionFlag::BadData);
    }
    Ok(col)
}

fn run_distributed<T: Scalar>(
    config: &ExperimentConfig<T>,
    frames: &[MeasurementFrame<T>],
    rows: usize,
    notes: &mut Vec<String>,
) -> Result<EstimatorColumns<T>> {
    let assignment = config
        .assignment
        .as_ref()
        .ok_or_else(|| Error::Config("distributed estimator needs an area assignment".into()))?;
    let (partition, models) = crate::partition::partition(
        &config.topology,
        &config.layout,
        assignment,
        config.scenario.dt_s,
        &config.noise,
        &config.bases,
    )?;

    // Exclude unobservable areas from dynamic estimation.
    let mut active = Vec::new();
    for (i, m) in models.iter().enumerate() {
        let report = check_observability(m);
        if report.observable {
            active.push(i);
        } else {
            notes.push(format!(
                "area {} excluded (rank {} < required {})",
                i + 1,
                report.rank,
                report.required
            ));
        }
    }
    if active.is_empty() {
        return Err(Error::Unobservable { rank: 0, required: 1 });
    }

    let mut estimators: Vec<AreaEstimator<T>> = active
        .iter()
        .map(|&i| {
            let neighbors = partition
                .neighbors(i)
                .into_iter()
                .filter(|j| active.contains(j))
                .map(|j| NeighborLink {
                    area: j,
                    selection: partition.selection_map::<T>(i, j),
                })
                .collect();
            AreaEstimator::new(i, models[i].clone(), neighbors)
        })
        .collect();
    // distributed_step addresses estimators by position; remap message ids
    // to positions within the active set
    let pos_of: std::collections::HashMap<usize, usize> = active
        .iter()
        .enumerate()
        .map(|(pos, &area)| (area, pos))
        .collect();
    for est in &mut estimators {
        for link in &mut est.neighbors {
            link.area = pos_of[&link.area];
        }
    }

    let m_buses = config.topology.n_buses();
    let mut covered = vec![false; m_buses];
    for &i in &active {
        for bus in &partition.area(i).buses {
            covered[config.topology.bus_index(*bus)?] = true;
        }
    }

    let mut col = EstimatorColumns::new(rows);
    col.covered = Some(covered);

    let sliced: Vec<Vec<MeasurementFrame<T>>> = active
        .iter()
        .map(|&i| frames.iter().map(|f| partition.slice_frame(i, f)).collect())
        .collect();

    for k in 1..rows {
        let prev: Vec<MeasurementFrame<T>> =
            active.iter().enumerate().map(|(p, _)| sliced[p][k - 1].clone()).collect();
        let curr: Vec<MeasurementFrame<T>> =
            active.iter().enumerate().map(|(p, _)| sliced[p][k].clone()).collect();
        let outputs = distributed_step(&mut estimators, &prev, &curr, config.alpha);

        // assemble the global voltage estimate from fused local ones; when a
        // bus is shared, the area with the smaller fused variance wins
        let mut global = DVector::zeros(2 * m_buses);
        let mut variance = vec![T::max_value().unwrap_or_else(T::one); m_buses];
        let mut have = vec![false; m_buses];
        let mut worst_gate: Option<T> = None;
        let mut any_reject = false;
        for (pos, out) in outputs.iter().enumerate() {
            let out = match out {
                Ok(o) => o,
                Err(e) => {
                    return Err(Error::Numerical(format!(
                        "distributed step {k}, area {}: {e}",
                        active[pos] + 1
                    )))
                }
            };
            let area = &partition.area(active[pos]);
            let nx = out.fused.x_f.len();
            for (local, bus) in area.buses.iter().enumerate() {
                let gi = config.topology.bus_index(*bus)?;
                let var = out.fused.p_f[(nx + 2 * local, nx + 2 * local)]
                    + out.fused.p_f[(nx + 2 * local + 1, nx + 2 * local + 1)];
                if !have[gi] || var < variance[gi] {
                    have[gi] = true;
                    variance[gi] = var;
                    global[2 * gi] = out.fused.u_f[2 * local];
                    global[2 * gi + 1] = out.fused.u_f[2 * local + 1];
                }
            }
            for gate in &out.gates {
                worst_gate = Some(match worst_gate {
                    Some(w) => w.max(gate.report.d_m),
                    None => gate.report.d_m,
                });
                if !gate.accepted {
                    any_reject = true;
                }
            }
        }
        col.voltage[k - 1] = Some(global);
        col.d_m[k] = worst_gate;
        col.flag[k] = Some(any_reject);
    }
    Ok(col)
}

fn summarize<T: Scalar>(
    estimators: &[EstimatorKind],
    metrics: &[MetricsRow<T>],
    attack: Option<&AttackSpec<T>>,
    notes: Vec<String>,
) -> Summary<T> {
    let per_estimator = estimators
        .iter()
        .enumerate()
        .map(|(e, &kind)| {
            let mut sum = T::zero();
            let mut count = 0usize;
            let mut max = T::zero();
            let mut false_alarms = 0usize;
            let mut latency = None;
            for row in metrics {
                let cell = &row.per_estimator[e];
                if let Some(v) = cell.mse_pu2 {
                    sum += v;
                    count += 1;
                    max = max.max(v);
                }
                if let Some(true) = cell.bad_data {
                    match attack {
                        Some(spec) if spec.window_contains(row.step) => {
                            if latency.is_none() {
                                latency = Some(row.step - spec.start_step);
                            }
                        }
                        _ => false_alarms += 1,
                    }
                }
            }
            EstimatorSummary {
                kind,
                mean_mse_pu2: if count > 0 {
                    sum / from_f64::<T>(count as f64)
                } else {
                    T::zero()
                },
                max_mse_pu2: max,
                steps_with_mse: count,
                false_alarms,
                detection_latency: latency,
            }
        })
        .collect();
    Summary {
        per_estimator,
        notes,
    }
}

/// Per-event-window peaks and quiet-interval means for estimator comparison.
#[derive(Clone, Debug)]
pub struct ComparisonTable<T> {
    pub estimators: Vec<EstimatorKind>,
    /// Steps after an event counted as the post-step window.
    pub window: usize,
    /// (event step, per-estimator peak MSE inside [event, event + window)).
    pub window_peaks: Vec<(usize, Vec<Option<T>>)>,
    /// Per-estimator mean MSE outside all windows (after warm-up).
    pub quiet_mean: Vec<Option<T>>,
}

impl<T: Scalar> ComparisonTable<T> {
    fn index_of(&self, kind: EstimatorKind) -> Option<usize> {
        self.estimators.iter().position(|&k| k == kind)
    }

    /// Peak-MSE ratio a/b within one event window.
    pub fn peak_ratio(
        &self,
        window_idx: usize,
        a: EstimatorKind,
        b: EstimatorKind,
    ) -> Option<f64> {
        let (ia, ib) = (self.index_of(a)?, self.index_of(b)?);
        let peaks = &self.window_peaks.get(window_idx)?.1;
        match (peaks[ia], peaks[ib]) {
            (Some(pa), Some(pb)) if to_f64(pb) > 0.0 => Some(to_f64(pa) / to_f64(pb)),
            _ => None,
        }
    }
}

impl<T: Scalar> std::fmt::Display for ComparisonTable<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "event_step")?;
        for k in &self.estimators {
            write!(f, ",{}_peak_mse_pu2", k.name())?;
        }
        writeln!(f)?;
        for (step, peaks) in &self.window_peaks {
            write!(f, "{step}")?;
            for p in peaks {
                match p {
                    Some(v) => write!(f, ",{}", to_f64(*v))?,
                    None => write!(f, ",")?,
                }
            }
            writeln!(f)?;
        }
        write!(f, "quiet_mean")?;
        for p in &self.quiet_mean {
            match p {
                Some(v) => write!(f, ",{}", to_f64(*v))?,
                None => write!(f, ",")?,
            }
        }
        Ok(())
    }
}

/// Builds the comparison table: per-event-window peak MSE per estimator and
/// the mean MSE over quiet intervals (outside every window, after warm-up).
pub fn compare_estimators<T: Scalar>(
    output: &ExperimentOutput<T>,
    window: usize,
    warmup: usize,
) -> Result<ComparisonTable<T>> {
    if output.estimators.len() < 2 {
        return Err(Error::Config("comparison needs at least two estimators".into()));
    }
    let n_est = output.estimators.len();
    let mut window_peaks = Vec::new();
    for &event in &output.event_steps {
        let mut peaks: Vec<Option<T>> = vec![None; n_est];
        for row in &output.metrics {
            if row.step >= event && row.step < event + window {
                for e in 0..n_est {
                    if let Some(v) = row.per_estimator[e].mse_pu2 {
                        peaks[e] = Some(match peaks[e] {
                            Some(p) => p.max(v),
                            None => v,
                        });
                    }
                }
            }
        }
        window_peaks.push((event, peaks));
    }
    let in_any_window = |step: usize| {
        output
            .event_steps
            .iter()
            .any(|&e| step >= e && step < e + window)
    };
    let mut sums = vec![T::zero(); n_est];
    let mut counts = vec![0usize; n_est];
    for row in &output.metrics {
        if row.step < warmup || in_any_window(row.step) {
            continue;
        }
        for e in 0..n_est {
            if let Some(v) = row.per_estimator[e].mse_pu2 {
                sums[e] += v;
                counts[e] += 1;
            }
        }
    }
    let quiet_mean = (0..n_est)
        .map(|e| (counts[e] > 0).then(|| sums[e] / from_f64::<T>(counts[e] as f64)))
        .collect();
    Ok(ComparisonTable {
        estimators: output.estimators.clone(),
        window,
        window_peaks,
        quiet_mean,
    })
}
