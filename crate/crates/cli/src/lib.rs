//! Command-line experiments on top of the `tidalfem` solver.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use config::{Experiment, ExperimentConfig};
pub use error::{CliError, CliResult};
pub use experiments::{cmd_damping, cmd_energy, cmd_mms, cmd_simulate, cmd_spinup, run_experiment};
pub use output::{RunSummary, Series};
