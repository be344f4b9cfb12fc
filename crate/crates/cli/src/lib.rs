//! Experiment runner tying metric definitions, solves and measurement
//! batteries into reproducible, replayable reports.

pub mod config;
pub mod error;
pub mod run;

pub use config::{CheckSpec, ExperimentConfig, SolveMode};
pub use error::{CliError, CliResult};
pub use run::{list_registries, replay, run, write_outcome, BatteryFilter, RunOutcome, RunReport};
