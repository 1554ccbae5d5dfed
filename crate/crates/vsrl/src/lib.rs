//! Experiment harness for `vsrl-core`: configuration documents, seeded
//! multi-run execution, persisted traces and metrics, property checks and the
//! virtuous-safety report.

pub mod checks;
pub mod cli;
pub mod config;
pub mod envs;
pub mod error;
pub mod output;
pub mod report;
pub mod runner;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
