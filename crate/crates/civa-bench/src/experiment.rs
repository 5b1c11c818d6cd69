//! Seeded multi-run sweeps.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use civa::hybrid::{self, GroundTruth, HybridConfig, HybridSeeds};
use civa::matrix_io::{stack_rows, write_matrix};
use civa::metrics::{self, similarity_factor};
use civa::{DemixingSet, Fit, Problem, SolverSettings};
use rayon::prelude::*;

use crate::config::{AlgorithmSpec, Axis, ExperimentConfig, Protocol, Timing};
use crate::plot;
use crate::report::{self, aggregate, AggregateRow, ConstraintSummary, MatrixPaths, RunReport, TraceLine};
use crate::seeds::{derive, tag};

/// The part of a sweep value that selects the data. Only `K` changes the
/// data; the other axes reuse one draw so their points are comparable.
pub fn data_key(axis: Axis, value: Option<usize>) -> u64 {
    match (axis, value) {
        (Axis::K, Some(k)) => k as u64,
        _ => 0,
    }
}

pub fn data_seed(base: u64, key: u64) -> u64 {
    derive(base, &[tag("data"), key])
}

pub fn latent_seed(data_seed: u64, run: usize) -> u64 {
    derive(data_seed, &[tag("latent"), run as u64])
}

/// Initialization seed; independent of the algorithm when `shared` is set.
pub fn init_seed(base: u64, key: u64, run: usize, shared: bool, alg: &AlgorithmSpec) -> u64 {
    if shared {
        derive(base, &[tag("init"), key, run as u64])
    } else {
        derive(base, &[tag("init"), key, run as u64, tag(alg.variant.name())])
    }
}

/// Sub-seeds for the data behind run `run` of a point.
pub fn hybrid_seeds(protocol: Protocol, data_seed: u64, run: usize) -> HybridSeeds {
    let mut seeds = HybridSeeds::from_base(data_seed);
    if protocol == Protocol::FreshSources {
        seeds.latent = latent_seed(data_seed, run);
    }
    seeds
}

/// One finished (or failed) run with what it produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub trace: Vec<TraceLine>,
    pub fit: Option<Fit>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub outcomes: Vec<RunOutcome>,
    pub aggregate: Vec<AggregateRow>,
}

impl ExperimentResult {
    pub fn reports(&self) -> Vec<RunReport> {
        self.outcomes.iter().map(|o| o.report.clone()).collect()
    }
}

struct PointData {
    problem: Problem,
    truth: GroundTruth,
}

fn prepare(config: &ExperimentConfig, point: &HybridConfig, seeds: HybridSeeds) -> Result<PointData> {
    let generated = hybrid::generate_with(point, seeds)?;
    let refs = generated.truth.constraint_references(point.m)?;
    let problem = Problem::with_preprocessing(&generated.data, Some(&refs), config.preprocessing)?;
    Ok(PointData { problem, truth: generated.truth })
}

struct Job<'a> {
    axis: Axis,
    value: Option<usize>,
    point: &'a HybridConfig,
    run: usize,
    data_seed: u64,
    alg: &'a AlgorithmSpec,
}

fn execute_job(config: &ExperimentConfig, job: &Job<'_>, data: &Result<PointData, String>) -> RunOutcome {
    let key = data_key(job.axis, job.value);
    let settings = SolverSettings {
        seed: init_seed(config.seed, key, job.run, config.shared_init, job.alg),
        ..job.alg.settings(&config.solver)
    };
    let method = job.alg.method().expect("validated");
    let mut report = RunReport {
        hybrid: job.point.clone(),
        algorithm: job.alg.clone(),
        method: method.clone(),
        solver: settings.clone(),
        preprocessing: config.preprocessing,
        protocol: config.protocol,
        sweep_axis: job.axis,
        sweep_value: job.value,
        run: job.run,
        variant: job.alg.variant,
        data_seed: job.data_seed,
        seed: settings.seed,
        iterations: 0,
        converged: false,
        runtime_s: None,
        seconds_per_iteration: None,
        final_objective: None,
        joint_isi: None,
        cross_joint_isi: None,
        sf: None,
        constraints: None,
        matrices: None,
        error: None,
    };
    let data = match data {
        Ok(d) => d,
        Err(e) => {
            report.error = Some(format!("data generation: {e}"));
            return RunOutcome { report, trace: Vec::new(), fit: None };
        }
    };
    let result = data.problem.fit(&method, &settings).map_err(anyhow::Error::from).and_then(|fit| {
        let joint = metrics::joint_isi_of(&fit.raw_demixing, &data.truth.mixing)?;
        let w = &fit.report.demixing;
        let pdata = &data.problem.data;
        let sf = if job.alg.variant.uses_references() {
            similarity_factor(&data.truth.sources, w, pdata, job.point.m, None)?
        } else {
            let assignment = metrics::match_components(&data.truth.sources, w, pdata)?;
            similarity_factor(&data.truth.sources, w, pdata, job.point.m, Some(&assignment))?
        };
        Ok((fit, joint, sf))
    });
    match result {
        Ok((fit, joint, sf)) => {
            let r = &fit.report;
            report.iterations = r.iterations;
            report.converged = r.converged;
            if config.timing == Timing::Wall {
                report.runtime_s = Some(r.solve_seconds);
                report.seconds_per_iteration = Some(r.seconds_per_iteration());
            }
            report.final_objective = Some(r.final_objective);
            report.joint_isi = Some(joint);
            report.sf = Some(sf);
            report.constraints = ConstraintSummary::from_report(r);
            let trace = report::trace_lines(r);
            RunOutcome { report, trace, fit: Some(fit) }
        }
        Err(e) => {
            report.error = Some(e.to_string());
            RunOutcome { report, trace: Vec::new(), fit: None }
        }
    }
}

/// Fills `cross_joint_isi` for every (point, algorithm) group with at
/// least two successful runs.
fn fill_cross_joint_isi(outcomes: &mut [RunOutcome]) {
    let mut groups: Vec<(Axis, Option<usize>, usize)> = Vec::new();
    for o in outcomes.iter() {
        let key = (o.report.sweep_axis, o.report.sweep_value, algorithm_index(outcomes, o));
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    for (axis, value, alg) in groups {
        let idx: Vec<usize> = (0..outcomes.len())
            .filter(|&i| {
                let o = &outcomes[i];
                o.fit.is_some()
                    && o.report.sweep_axis == axis
                    && o.report.sweep_value == value
                    && algorithm_index(outcomes, o) == alg
            })
            .collect();
        if idx.len() < 2 {
            continue;
        }
        let runs: Vec<DemixingSet> =
            idx.iter().map(|&i| outcomes[i].fit.as_ref().unwrap().raw_demixing.clone()).collect();
        if let Ok(values) = metrics::cross_joint_isi(&runs) {
            for (&i, v) in idx.iter().zip(values) {
                outcomes[i].report.cross_joint_isi = Some(v);
            }
        }
    }
}

fn algorithm_index(outcomes: &[RunOutcome], o: &RunOutcome) -> usize {
    outcomes.iter().position(|x| x.report.algorithm == o.report.algorithm).unwrap()
}

/// Runs every point, run and algorithm without touching the file system.
pub fn execute(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(config.threads).build()?;
    let mut outcomes = Vec::new();
    for (value, point) in config.sweep.points(&config.hybrid) {
        let axis = config.sweep.axis;
        let seed = data_seed(config.seed, data_key(axis, value));
        let draws = match config.protocol {
            Protocol::FixedSources => 1,
            Protocol::FreshSources => config.runs_per_point,
        };
        let data: Vec<Result<PointData, String>> = pool.install(|| {
            (0..draws)
                .into_par_iter()
                .map(|run| prepare(config, &point, hybrid_seeds(config.protocol, seed, run)).map_err(|e| format!("{e:#}")))
                .collect()
        });
        let jobs: Vec<Job<'_>> = (0..config.runs_per_point)
            .flat_map(|run| config.algorithms.iter().map(move |alg| (run, alg)))
            .map(|(run, alg)| Job { axis, value, point: &point, run, data_seed: seed, alg })
            .collect();
        let point_outcomes: Vec<RunOutcome> = pool.install(|| {
            jobs.par_iter().map(|job| execute_job(config, job, &data[job.run.min(draws - 1)])).collect()
        });
        outcomes.extend(point_outcomes);
    }
    fill_cross_joint_isi(&mut outcomes);
    let aggregate = aggregate(&outcomes.iter().map(|o| o.report.clone()).collect::<Vec<_>>());
    Ok(ExperimentResult { outcomes, aggregate })
}

/// Runs the experiment and writes its artifacts under `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let mut result = execute(config)?;
    write_outputs(config, &mut result, &config.output_dir)?;
    Ok(result)
}

/// Paths of the files written by [`write_outputs`].
pub fn summary_path(dir: &Path) -> PathBuf {
    dir.join("summary.csv")
}

pub fn write_outputs(config: &ExperimentConfig, result: &mut ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("reports")).with_context(|| format!("creating {}", dir.display()))?;
    report::write_file(&dir.join("config.json"), |out| Ok(serde_json::to_writer_pretty(out, config)?))?;
    if config.save_matrices {
        fs::create_dir_all(dir.join("matrices"))?;
        for o in &mut result.outcomes {
            let Some(fit) = &o.fit else { continue };
            let stem = o.report.stem();
            let m = dir.join("matrices");
            let paths = MatrixPaths {
                demixing: m.join(format!("{stem}-W.ivamat")),
                scv_covariances: m.join(format!("{stem}-Sigma.ivamat")),
                mixing: m.join(format!("{stem}-A.ivamat")),
            };
            write_matrix(&paths.demixing, &stack_rows(fit.raw_demixing.matrices())?)?;
            write_matrix(&paths.scv_covariances, &stack_rows(&fit.report.scv.covariances)?)?;
            let seeds = hybrid_seeds(config.protocol, o.report.data_seed, o.report.run);
            let p = &o.report.hybrid;
            let mixing = hybrid::generate_mixing(p.n, p.k, p.cond_limit, seeds.mixing)?;
            write_matrix(&paths.mixing, &stack_rows(&mixing)?)?;
            o.report.matrices = Some(paths);
        }
    }
    for o in &result.outcomes {
        let path = dir.join("reports").join(format!("{}.jsonl", o.report.stem()));
        report::write_run_report(&path, &o.report, &o.trace)?;
    }
    let reports = result.reports();
    report::write_file(&summary_path(dir), |out| report::write_summary(&reports, out))?;
    report::write_file(&dir.join("aggregate.csv"), |out| report::write_aggregate(&result.aggregate, out))?;
    plot::write_plot_data(&result.aggregate, &dir.join("plots"))?;
    Ok(())
}
