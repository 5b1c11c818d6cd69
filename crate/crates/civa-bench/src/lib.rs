//! Experiment harness for the `civa` solvers: seeded sweeps over the number
//! of datasets or references, summary tables, plot data and a fast
//! verification suite.

pub mod config;
pub mod experiment;
pub mod plot;
pub mod report;
pub mod seeds;
pub mod verify;

pub use config::{AlgorithmSpec, Axis, ExperimentConfig, Protocol, Sweep, Timing};
pub use experiment::{execute, run_experiment, ExperimentResult, RunOutcome};
pub use report::{AggregateRow, RunReport, Stat};
