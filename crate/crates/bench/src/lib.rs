//! Experiment runner for the `asmd-core` solvers: configuration files,
//! reference optima, trace CSVs and the manifest.

pub mod config;
pub mod output;
pub mod runner;

pub use config::{ExperimentConfig, RunSpec};
pub use runner::{run_experiment, RunOptions};
