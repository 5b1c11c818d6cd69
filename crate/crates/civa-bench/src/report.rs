//! Per-run reports, the summary and aggregate tables.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use civa::hybrid::HybridConfig;
use civa::{Method, Preprocessing, SolverReport, SolverSettings, Variant};
use serde::{Deserialize, Serialize};

use crate::config::{AlgorithmSpec, Axis, Protocol};

pub const SUMMARY_HEADER: [&str; 10] = [
    "sweep_axis",
    "sweep_value",
    "variant",
    "seed",
    "joint_isi",
    "cross_joint_isi",
    "sf",
    "iters",
    "runtime_s",
    "converged",
];

/// Constraint bookkeeping at the end of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSummary {
    pub satisfied: usize,
    pub total: usize,
    pub mean_rho: f64,
    pub mean_mu: f64,
    pub switches: usize,
}

impl ConstraintSummary {
    pub fn from_report(report: &SolverReport) -> Option<Self> {
        let c = report.constraints.as_ref()?;
        let state = &c.final_state;
        Some(Self {
            satisfied: c.satisfied_count(),
            total: c.satisfied.len(),
            mean_rho: state.rho.mean(),
            mean_mu: state.mu.mean(),
            switches: c.switch_events.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixPaths {
    pub demixing: PathBuf,
    pub scv_covariances: PathBuf,
    pub mixing: PathBuf,
}

/// Everything recorded about one (point, run, algorithm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub hybrid: HybridConfig,
    pub algorithm: AlgorithmSpec,
    pub method: Method,
    pub solver: SolverSettings,
    pub preprocessing: Preprocessing,
    pub protocol: Protocol,
    pub sweep_axis: Axis,
    pub sweep_value: Option<usize>,
    pub run: usize,
    pub variant: Variant,
    pub data_seed: u64,
    /// The initialization seed; the `seed` column of the summary.
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub runtime_s: Option<f64>,
    pub seconds_per_iteration: Option<f64>,
    pub final_objective: Option<f64>,
    pub joint_isi: Option<f64>,
    pub cross_joint_isi: Option<f64>,
    pub sf: Option<f64>,
    pub constraints: Option<ConstraintSummary>,
    pub matrices: Option<MatrixPaths>,
    pub error: Option<String>,
}

impl RunReport {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    /// File name stem shared by the report and its matrices.
    pub fn stem(&self) -> String {
        let point = match self.sweep_value {
            Some(v) => format!("{}{v}", self.sweep_axis.name()),
            None => "single".into(),
        };
        format!("{point}-run{}-{}", self.run, self.variant)
    }
}

/// One line per sweep after the report line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub sweep: usize,
    pub objective: f64,
    pub change: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_mu: Option<f64>,
}

pub fn trace_lines(report: &SolverReport) -> Vec<TraceLine> {
    let c = report.constraints.as_ref();
    report
        .convergence_trace
        .iter()
        .enumerate()
        .map(|(i, &change)| TraceLine {
            sweep: i + 1,
            objective: report.objective_trace[i + 1],
            change,
            mean_rho: c.and_then(|c| c.mean_rho_trace.get(i).copied()),
            mean_mu: c.and_then(|c| c.mean_mu_trace.get(i).copied()),
        })
        .collect()
}

/// Writes the report as the first JSON line, then one line per trace entry.
pub fn write_run_report(path: &Path, report: &RunReport, trace: &[TraceLine]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer(&mut out, report)?;
    out.write_all(b"\n")?;
    for line in trace {
        serde_json::to_writer(&mut out, line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_run_report(path: &Path) -> Result<(RunReport, Vec<TraceLine>)> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut lines = BufReader::new(file).lines();
    let Some(first) = lines.next() else {
        bail!("{} is empty", path.display());
    };
    let report = serde_json::from_str(&first?)?;
    let trace = lines.map(|l| Ok(serde_json::from_str(&l?)?)).collect::<Result<_>>()?;
    Ok((report, trace))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// The per-run summary table.
pub fn write_summary<W: Write>(reports: &[RunReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in reports {
        w.write_record([
            r.sweep_axis.name().to_string(),
            r.sweep_value.map(|v| v.to_string()).unwrap_or_default(),
            r.variant.to_string(),
            r.seed.to_string(),
            opt(r.joint_isi),
            opt(r.cross_joint_isi),
            opt(r.sf),
            r.iterations.to_string(),
            opt(r.runtime_s),
            r.converged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Sample mean and standard deviation; `None` without data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std, count: v.len() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    JointIsi,
    CrossJointIsi,
    Sf,
    Runtime,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::JointIsi, Metric::CrossJointIsi, Metric::Sf, Metric::Runtime];

    pub fn name(self) -> &'static str {
        match self {
            Metric::JointIsi => "joint_isi",
            Metric::CrossJointIsi => "cross_joint_isi",
            Metric::Sf => "sf",
            Metric::Runtime => "runtime_s",
        }
    }

    pub fn of(self, r: &RunReport) -> Option<f64> {
        match self {
            Metric::JointIsi => r.joint_isi,
            Metric::CrossJointIsi => r.cross_joint_isi,
            Metric::Sf => r.sf,
            Metric::Runtime => r.runtime_s,
        }
    }
}

/// Aggregates for one (point, variant).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub sweep_axis: Axis,
    pub sweep_value: Option<usize>,
    pub variant: Variant,
    pub runs: usize,
    pub failed: usize,
    pub joint_isi: Option<Stat>,
    pub cross_joint_isi: Option<Stat>,
    pub sf: Option<Stat>,
    pub runtime_s: Option<Stat>,
    pub iterations: Option<Stat>,
    pub converged: usize,
}

impl AggregateRow {
    pub fn stat(&self, metric: Metric) -> Option<Stat> {
        match metric {
            Metric::JointIsi => self.joint_isi,
            Metric::CrossJointIsi => self.cross_joint_isi,
            Metric::Sf => self.sf,
            Metric::Runtime => self.runtime_s,
        }
    }
}

/// Groups reports by (point, variant), keeping first-seen order.
pub fn aggregate(reports: &[RunReport]) -> Vec<AggregateRow> {
    let mut keys: Vec<(Axis, Option<usize>, Variant)> = Vec::new();
    for r in reports {
        let key = (r.sweep_axis, r.sweep_value, r.variant);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(axis, value, variant)| {
            let group: Vec<&RunReport> = reports
                .iter()
                .filter(|r| r.sweep_axis == axis && r.sweep_value == value && r.variant == variant)
                .collect();
            let ok = || group.iter().filter(|r| !r.failed());
            AggregateRow {
                sweep_axis: axis,
                sweep_value: value,
                variant,
                runs: group.len(),
                failed: group.iter().filter(|r| r.failed()).count(),
                joint_isi: Stat::of(ok().filter_map(|r| r.joint_isi)),
                cross_joint_isi: Stat::of(ok().filter_map(|r| r.cross_joint_isi)),
                sf: Stat::of(ok().filter_map(|r| r.sf)),
                runtime_s: Stat::of(ok().filter_map(|r| r.runtime_s)),
                iterations: Stat::of(ok().map(|r| r.iterations as f64)),
                converged: ok().filter(|r| r.converged).count(),
            }
        })
        .collect()
}

pub fn write_aggregate<W: Write>(rows: &[AggregateRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["sweep_axis", "sweep_value", "variant", "runs", "failed"];
    let stats = ["joint_isi", "cross_joint_isi", "sf", "runtime_s", "iters"];
    let names: Vec<String> = stats.iter().flat_map(|s| [format!("{s}_mean"), format!("{s}_std")]).collect();
    header.extend(names.iter().map(String::as_str));
    header.push("converged");
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.sweep_axis.name().to_string(),
            r.sweep_value.map(|v| v.to_string()).unwrap_or_default(),
            r.variant.to_string(),
            r.runs.to_string(),
            r.failed.to_string(),
        ];
        for s in [r.joint_isi, r.cross_joint_isi, r.sf, r.runtime_s, r.iterations] {
            rec.push(opt(s.map(|s| s.mean)));
            rec.push(opt(s.map(|s| s.std)));
        }
        rec.push(r.converged.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_file(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write(&mut out)?;
    out.flush()?;
    Ok(())
}
