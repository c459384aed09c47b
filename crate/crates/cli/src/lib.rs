//! Experiment runner: strict configs, suites, manifests and reports.

pub mod check;
pub mod config;
pub mod output;
pub mod report;
pub mod suites;
pub mod verify;

pub use suites::{run_config, RunOptions};
