//! Config-driven experiment runner for the `plateau` simulator: training
//! ensembles, hypothesis-testing demonstrations and concentration scans, with
//! CSV, JSON and SVG output.

pub mod config;
pub mod plots;
pub mod run;

pub use config::{ConfigError, ExperimentConfig, ShotToken, PRESETS};
pub use run::{run_experiment, RunError, RunOptions, RunOutcome, RunRecord};
