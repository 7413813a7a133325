use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use tidalfem_cli::{run_experiment, Experiment, ExperimentConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Energy,
    Damping,
    Mms,
    Spinup,
    Simulate,
}

impl From<Command> for Experiment {
    fn from(c: Command) -> Self {
        match c {
            Command::Energy => Experiment::Energy,
            Command::Damping => Experiment::Damping,
            Command::Mms => Experiment::Mms,
            Command::Spinup => Experiment::Spinup,
            Command::Simulate => Experiment::Simulate,
        }
    }
}

/// Rotating shallow-water experiments with mixed finite elements.
///
/// Log verbosity comes from the TIDALFEM_LOG environment variable
/// (error, warn, info, debug, trace).
#[derive(Debug, Parser)]
#[command(name = "tidalfem", version)]
struct Cli {
    command: Command,

    /// JSON config merged over the experiment's defaults.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Dotted `key=value` patch, e.g. `params.drag=0.1`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TIDALFEM_LOG", "info")).init();
    let cli = Cli::parse();
    let result = ExperimentConfig::load(cli.command.into(), cli.config.as_deref(), &cli.overrides)
        .and_then(|cfg| run_experiment(&cfg, &cli.out));
    match result {
        Ok(summary) => {
            println!("{}", summary.series.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
