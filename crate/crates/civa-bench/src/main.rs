use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use civa::hybrid::{self, HybridConfig};
use civa::matrix_io::{read_matrix, split_rows, stack_rows, write_matrix};
use civa::{metrics, DatasetCollection, DemixingSet, Problem, SolverSettings, Variant};
use civa_bench::config::{AlgorithmSpec, ExperimentConfig};
use civa_bench::experiment::{self, data_key, data_seed, hybrid_seeds, init_seed};
use civa_bench::report::{self, ConstraintSummary, MatrixPaths, RunReport};
use civa_bench::verify::{self, VerifyConfig};
use civa_bench::Axis;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "civa-bench", version, about = "Hybrid-data experiments for constrained IVA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a hybrid dataset, its ground truth and references to a directory.
    Simulate(Common),
    /// Run one algorithm on a directory written by `simulate`.
    Run {
        #[command(flatten)]
        common: Common,
        /// Directory written by `simulate`.
        #[arg(long)]
        input: PathBuf,
    },
    /// Run the full experiment described by the config.
    Sweep(Common),
    /// Joint-ISI and cross-joint-ISI from stored demixing and mixing matrices.
    Metrics {
        /// Stacked mixing matrices (K blocks of N x N).
        #[arg(long)]
        mixing: Option<PathBuf>,
        /// Stacked demixing matrices, one file per run.
        #[arg(long = "w", required = true)]
        demixing: Vec<PathBuf>,
    },
    /// Run the fast invariant suite.
    Verify(Common),
}

#[derive(Args, Default)]
struct Common {
    /// TOML or JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    mu_max: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    eta0: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::new(HybridConfig::new(10, 10, 10_000, 10)),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        if let Some(threads) = self.threads {
            config.threads = threads;
        }
        if let Some(eta0) = self.eta0 {
            config.solver.eta0 = eta0;
        }
        let overrides = [self.gamma, self.mu_max, self.lambda, self.rho];
        match self.variant {
            Some(variant) => {
                config.algorithms = vec![AlgorithmSpec {
                    variant,
                    gamma: self.gamma,
                    mu_max: self.mu_max,
                    lambda: self.lambda,
                    rho: self.rho,
                    eta0: None,
                }];
            }
            None if overrides.iter().any(Option::is_some) => {
                bail!("--gamma, --mu-max, --lambda and --rho need --variant")
            }
            None => {}
        }
        config.validate()?;
        Ok(config)
    }

    fn algorithm(&self, config: &ExperimentConfig) -> Result<AlgorithmSpec> {
        match (self.variant, config.algorithms.as_slice()) {
            (Some(_), [alg]) => Ok(alg.clone()),
            (None, [alg]) => Ok(alg.clone()),
            _ => bail!("run needs --variant or a config with exactly one algorithm"),
        }
    }
}

/// Written by `simulate` next to the matrices.
#[derive(Serialize, Deserialize)]
struct SimulationMeta {
    hybrid: HybridConfig,
    seed: u64,
    data_seed: u64,
}

fn simulate(common: &Common) -> Result<()> {
    let config = common.load()?;
    let out = &config.output_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let seed = data_seed(config.seed, data_key(Axis::None, None));
    let data = hybrid::generate_with(&config.hybrid, hybrid_seeds(config.protocol, seed, 0))?;
    write_matrix(out.join("data.ivamat"), &stack_rows(data.data.datasets())?)?;
    write_matrix(out.join("mixing.ivamat"), &stack_rows(&data.truth.mixing)?)?;
    write_matrix(out.join("sources.ivamat"), &stack_rows(&data.truth.sources)?)?;
    write_matrix(out.join("references.ivamat"), &data.truth.references.to_rows())?;
    let meta = SimulationMeta { hybrid: config.hybrid.clone(), seed: config.seed, data_seed: seed };
    report::write_file(&out.join("meta.json"), |w| Ok(serde_json::to_writer_pretty(w, &meta)?))?;
    println!("wrote N={} K={} V={} to {}", config.hybrid.n, config.hybrid.k, config.hybrid.v, out.display());
    Ok(())
}

fn run(common: &Common, input: &Path) -> Result<()> {
    let mut config = common.load()?;
    let meta: SimulationMeta = serde_json::from_str(&fs::read_to_string(input.join("meta.json"))?)?;
    if common.seed.is_none() {
        config.seed = meta.seed;
    }
    let alg = common.algorithm(&config)?;
    let h = &meta.hybrid;
    let data = DatasetCollection::new(split_rows(&read_matrix(input.join("data.ivamat"))?, h.n)?)?;
    let mixing = split_rows(&read_matrix(input.join("mixing.ivamat"))?, h.n)?;
    let sources = split_rows(&read_matrix(input.join("sources.ivamat"))?, h.k)?;
    let refs = civa::ReferenceSet::from_rows(&read_matrix(input.join("references.ivamat"))?)?.truncated(h.m)?;
    let method = alg.method()?;
    let settings = SolverSettings {
        seed: init_seed(config.seed, data_key(Axis::None, None), 0, config.shared_init, &alg),
        ..alg.settings(&config.solver)
    };
    let problem = Problem::with_preprocessing(&data, Some(&refs), config.preprocessing)?;
    let fit = problem.fit(&method, &settings)?;
    let w = &fit.report.demixing;
    let assignment = if alg.variant.uses_references() {
        None
    } else {
        Some(metrics::match_components(&sources, w, &problem.data)?)
    };
    let out = &config.output_dir;
    fs::create_dir_all(out)?;
    let paths = MatrixPaths {
        demixing: out.join("W.ivamat"),
        scv_covariances: out.join("Sigma.ivamat"),
        mixing: input.join("mixing.ivamat"),
    };
    write_matrix(&paths.demixing, &stack_rows(fit.raw_demixing.matrices())?)?;
    write_matrix(&paths.scv_covariances, &stack_rows(&fit.report.scv.covariances)?)?;
    let r = &fit.report;
    let report = RunReport {
        hybrid: h.clone(),
        algorithm: alg.clone(),
        method,
        solver: settings.clone(),
        preprocessing: config.preprocessing,
        protocol: config.protocol,
        sweep_axis: Axis::None,
        sweep_value: None,
        run: 0,
        variant: alg.variant,
        data_seed: meta.data_seed,
        seed: settings.seed,
        iterations: r.iterations,
        converged: r.converged,
        runtime_s: Some(r.solve_seconds),
        seconds_per_iteration: Some(r.seconds_per_iteration()),
        final_objective: Some(r.final_objective),
        joint_isi: Some(metrics::joint_isi_of(&fit.raw_demixing, &mixing)?),
        cross_joint_isi: None,
        sf: Some(metrics::similarity_factor(&sources, w, &problem.data, h.m, assignment.as_deref())?),
        constraints: ConstraintSummary::from_report(r),
        matrices: Some(paths),
        error: None,
    };
    report::write_run_report(&out.join("report.jsonl"), &report, &report::trace_lines(r))?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn sweep(common: &Common) -> Result<()> {
    let config = common.load()?;
    let result = experiment::run_experiment(&config)?;
    let failed = result.outcomes.iter().filter(|o| o.report.failed()).count();
    println!(
        "{} runs ({} failed); summary in {}",
        result.outcomes.len(),
        failed,
        experiment::summary_path(&config.output_dir).display()
    );
    for row in &result.aggregate {
        let value = row.sweep_value.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
        let fmt = |s: Option<civa_bench::Stat>| s.map_or("-".into(), |s| format!("{:.4}±{:.4}", s.mean, s.std));
        println!(
            "{}={value:<4} {:<10} joint_isi {}  cross {}  sf {}",
            row.sweep_axis.name(),
            row.variant.name(),
            fmt(row.joint_isi),
            fmt(row.cross_joint_isi),
            fmt(row.sf)
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct MetricsOutput {
    joint_isi: Option<Vec<f64>>,
    cross_joint_isi: Option<Vec<f64>>,
}

fn metrics_cmd(mixing: Option<&Path>, demixing: &[PathBuf]) -> Result<()> {
    let runs: Vec<DemixingSet> = demixing
        .iter()
        .map(|p| {
            let m = read_matrix(p)?;
            Ok(DemixingSet::new(split_rows(&m, m.ncols())?)?)
        })
        .collect::<Result<_>>()?;
    let joint_isi = match mixing {
        Some(p) => {
            let m = read_matrix(p)?;
            let a = split_rows(&m, m.ncols())?;
            Some(runs.iter().map(|w| metrics::joint_isi_of(w, &a)).collect::<civa::Result<_>>()?)
        }
        None => None,
    };
    let cross_joint_isi = if runs.len() > 1 { Some(metrics::cross_joint_isi(&runs)?) } else { None };
    println!("{}", serde_json::to_string_pretty(&MetricsOutput { joint_isi, cross_joint_isi })?);
    Ok(())
}

fn verify_cmd(common: &Common) -> Result<bool> {
    if common.config.is_some() {
        common.load().context("config validation")?;
    }
    let cfg = VerifyConfig { seed: common.seed.unwrap_or(0), ..VerifyConfig::default() };
    let checks = verify::run_checks(&cfg);
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {failed} failed", checks.len());
    Ok(failed == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(c) => simulate(c).map(|_| true),
        Command::Run { common, input } => run(common, input).map(|_| true),
        Command::Sweep(c) => sweep(c).map(|_| true),
        Command::Metrics { mixing, demixing } => metrics_cmd(mixing.as_deref(), demixing).map(|_| true),
        Command::Verify(c) => verify_cmd(c),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
