//! Config loading and experiment running for the `actinf` binary.

pub mod config;
pub mod error;
pub mod runner;

pub use config::{load_config, ExperimentConfig, ModelSection, PoliciesSpec, RunSection};
pub use error::{CliError, Result};
pub use runner::{run_experiment, RunOutput, CYCLES_FILE, SUMMARY_FILE};
