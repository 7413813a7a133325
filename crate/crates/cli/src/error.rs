use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("solver: {0}")]
    Solver(#[source] tidalfem::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("resource: {0}")]
    Resource(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Process exit status: 2 for configuration, 3 for the numerics, 4 for
    /// files and resource limits.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io { .. } | CliError::Resource(_) => 4,
        }
    }
}

impl From<tidalfem::Error> for CliError {
    fn from(e: tidalfem::Error) -> Self {
        use tidalfem::Error as E;
        match e.root() {
            E::InvalidInput(msg) | E::Geometry(msg) => CliError::Config(msg.clone()),
            E::Resource(msg) => CliError::Resource(msg.clone()),
            E::Convergence { .. } | E::DimensionMismatch { .. } | E::Step { .. } => CliError::Solver(e),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
