//! Experiment harness for the adaptive optimizer: objective bindings,
//! repeated-seed comparisons and their reports.

pub mod config;
pub mod experiment;
pub mod objective;
pub mod report;
pub mod summary;

pub use config::RunConfig;
pub use experiment::{run_experiment, trial_log, ExperimentResult};
