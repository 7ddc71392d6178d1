//! CSV readers and writers for truth, measurements, metrics, and estimates.
//!
//! Every file starts with a `# dsie/<kind> v1` schema comment followed by the
//! header row. Floats are written with Rust's shortest round-trip formatting,
//! so identical runs produce byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::estimation::MeasurementFrame;
use crate::experiment::{ExperimentOutput, Summary};
use crate::model::{metered_bus_order, MeasurementLayout};
use crate::scalar::{to_f64, Scalar};
use crate::simulation::TruthTrajectory;
use crate::topology::NetworkTopology;

pub const SCHEMA_VERSION: u32 = 1;

fn schema_line(kind: &str) -> String {
    format!("# dsie/{kind} v{SCHEMA_VERSION}")
}

fn fmt<T: Scalar>(v: T) -> String {
    format!("{}", to_f64(v))
}

fn write_rows(path: &Path, kind: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{}", schema_line(kind))?;
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Columns: step, time_s, branch currents i_<from>_<to>_{d,q}, bus voltages
/// v<bus>_{d,q}; SI units, full precision.
pub fn write_truth<T: Scalar>(
    path: &Path,
    topology: &NetworkTopology<T>,
    truth: &TruthTrajectory<T>,
) -> Result<()> {
    let mut header = vec!["step".to_string(), "time_s".to_string()];
    for k in 0..topology.n_branches() {
        let label = topology.branch_label(crate::topology::BranchId(k));
        header.push(format!("i_{label}_d"));
        header.push(format!("i_{label}_q"));
    }
    for bus in topology.buses() {
        header.push(format!("v{}_d", bus.id));
        header.push(format!("v{}_q", bus.id));
    }
    let mut rows = Vec::with_capacity(truth.states.len());
    for (k, (x, u)) in truth.states.iter().zip(truth.inputs.iter()).enumerate() {
        let mut row = vec![k.to_string(), fmt(truth.dt_s * crate::scalar::from_f64(k as f64))];
        row.extend(x.iter().map(|&v| fmt(v)));
        row.extend(u.iter().map(|&v| fmt(v)));
        rows.push(row);
    }
    write_rows(path, "truth", &header, &rows)
}

fn measurement_header<T: Scalar>(
    topology: &NetworkTopology<T>,
    layout: &MeasurementLayout,
) -> Result<Vec<String>> {
    let mut header = vec!["step".to_string(), "time_s".to_string()];
    for &id in layout.metered_branches() {
        let label = topology.branch_label(id);
        header.push(format!("zx_{label}_d"));
        header.push(format!("zx_{label}_q"));
    }
    for bus in metered_bus_order(layout, topology)? {
        header.push(format!("zu{bus}_d"));
        header.push(format!("zu{bus}_q"));
    }
    Ok(header)
}

/// Columns: step, time_s, metered branch currents zx_<from>_<to>_{d,q}, then
/// metered bus voltages zu<bus>_{d,q}; SI units.
pub fn write_measurements<T: Scalar>(
    path: &Path,
    topology: &NetworkTopology<T>,
    layout: &MeasurementLayout,
    dt_s: T,
    frames: &[MeasurementFrame<T>],
) -> Result<()> {
    let header = measurement_header(topology, layout)?;
    let mut rows = Vec::with_capacity(frames.len());
    for f in frames {
        let mut row = vec![
            f.k.to_string(),
            fmt(dt_s * crate::scalar::from_f64(f.k as f64)),
        ];
        row.extend(f.z_x.iter().map(|&v| fmt(v)));
        row.extend(f.z_u.iter().map(|&v| fmt(v)));
        rows.push(row);
    }
    write_rows(path, "measurements", &header, &rows)
}

/// Reads a measurements CSV written by [`write_measurements`]; the layout must
/// match the column count.
pub fn read_measurements<T: Scalar>(
    path: &Path,
    topology: &NetworkTopology<T>,
    layout: &MeasurementLayout,
) -> Result<Vec<MeasurementFrame<T>>> {
    let expected_header = measurement_header(topology, layout)?;
    let p = 2 * layout.metered_branches().len();
    let l = 2 * layout.metered_buses().len();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_path(path)?;
    {
        let got: Vec<String> = reader
            .headers()?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        if got != expected_header {
            return Err(Error::Config(format!(
                "measurement CSV header does not match the layout (expected {} columns)",
                expected_header.len()
            )));
        }
    }
    let mut frames = Vec::new();
    for record in reader.records() {
        let record = record?;
        let step: usize = record
            .get(0)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Config("bad step column".into()))?;
        let mut values = Vec::with_capacity(p + l);
        for i in 2..record.len() {
            let v: f64 = record
                .get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Config(format!("bad float in column {i}")))?;
            values.push(crate::scalar::from_f64::<T>(v));
        }
        if values.len() != p + l {
            return Err(Error::Dimension {
                context: "measurement CSV row",
                expected: p + l,
                got: values.len(),
            });
        }
        let z_x = DVector::from_row_slice(&values[0..p]);
        let z_u = DVector::from_row_slice(&values[p..p + l]);
        frames.push(MeasurementFrame::new(step, z_x, z_u));
    }
    Ok(frames)
}

/// Columns: step, time_s, attack_active, then per estimator
/// `<name>_mse_pu2`, `<name>_dm`, `<name>_flag`. Missing values are empty.
pub fn write_metrics<T: Scalar>(path: &Path, output: &ExperimentOutput<T>) -> Result<()> {
    let mut header = vec![
        "step".to_string(),
        "time_s".to_string(),
        "attack_active".to_string(),
    ];
    for kind in &output.estimators {
        header.push(format!("{}_mse_pu2", kind.name()));
        header.push(format!("{}_dm", kind.name()));
        header.push(format!("{}_flag", kind.name()));
    }
    let mut rows = Vec::with_capacity(output.metrics.len());
    for m in &output.metrics {
        let mut row = vec![
            m.step.to_string(),
            fmt(m.time_s),
            u8::from(m.attack_active).to_string(),
        ];
        for cell in &m.per_estimator {
            row.push(cell.mse_pu2.map(fmt).unwrap_or_default());
            row.push(cell.d_m.map(fmt).unwrap_or_default());
            row.push(
                cell.bad_data
                    .map(|b| u8::from(b).to_string())
                    .unwrap_or_default(),
            );
        }
        rows.push(row);
    }
    write_rows(path, "metrics", &header, &rows)
}

/// Columns: step, time_s, per estimator per bus `<name>_v<bus>_{d,q}`, then
/// the centralized branch-current estimates `sie_i_<from>_<to>_{d,q}`.
pub fn write_estimates<T: Scalar>(
    path: &Path,
    topology: &NetworkTopology<T>,
    output: &ExperimentOutput<T>,
) -> Result<()> {
    let mut header = vec!["step".to_string(), "time_s".to_string()];
    for kind in &output.estimators {
        for bus in topology.buses() {
            header.push(format!("{}_v{}_d", kind.name(), bus.id));
            header.push(format!("{}_v{}_q", kind.name(), bus.id));
        }
    }
    let has_sie = output
        .estimators
        .iter()
        .any(|k| *k == crate::experiment::EstimatorKind::Sie);
    if has_sie {
        for k in 0..topology.n_branches() {
            let label = topology.branch_label(crate::topology::BranchId(k));
            header.push(format!("sie_i_{label}_d"));
            header.push(format!("sie_i_{label}_q"));
        }
    }
    let mut rows = Vec::with_capacity(output.estimates.len());
    for est in &output.estimates {
        let mut row = vec![est.step.to_string(), fmt(est.time_s)];
        for per_bus in &est.voltages {
            for v in per_bus {
                match v {
                    Some((d, q)) => {
                        row.push(fmt(*d));
                        row.push(fmt(*q));
                    }
                    None => {
                        row.push(String::new());
                        row.push(String::new());
                    }
                }
            }
        }
        if has_sie {
            match &est.sie_currents {
                Some(x) => row.extend(x.iter().map(|&v| fmt(v))),
                None => row.extend(std::iter::repeat_n(
                    String::new(),
                    2 * topology.n_branches(),
                )),
            }
        }
        rows.push(row);
    }
    write_rows(path, "estimates", &header, &rows)
}

/// Plain-text block: one line per estimator plus harness notes.
pub fn write_summary<T: Scalar>(path: &Path, summary: &Summary<T>) -> Result<()> {
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{}", schema_line("summary"))?;
    for s in &summary.per_estimator {
        let latency = s
            .detection_latency
            .map(|l| l.to_string())
            .unwrap_or_else(|| "none".to_string());
        writeln!(
            out,
            "estimator={} mean_mse_pu2={} max_mse_pu2={} steps_with_mse={} false_alarms={} detection_latency_steps={}",
            s.kind.name(),
            to_f64(s.mean_mse_pu2),
            to_f64(s.max_mse_pu2),
            s.steps_with_mse,
            s.false_alarms,
            latency,
        )?;
    }
    for note in &summary.notes {
        writeln!(out, "note: {note}")?;
    }
    out.flush()?;
    Ok(())
}

/// Writes metrics.csv, estimates.csv, and summary.txt into a directory.
pub fn write_experiment_outputs<T: Scalar>(
    dir: &Path,
    topology: &NetworkTopology<T>,
    output: &ExperimentOutput<T>,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_metrics(&dir.join("metrics.csv"), output)?;
    write_estimates(&dir.join("estimates.csv"), topology, output)?;
    write_summary(&dir.join("summary.txt"), &output.summary)?;
    Ok(())
}
