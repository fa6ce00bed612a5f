//! Failure classes of a run and their process exit codes.

use std::path::PathBuf;

use drofolio::{Error, GBar};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),

    #[error("infeasible allocation: rho = {rho:e} exceeds the largest feasible floor G_bar = {g_bar}")]
    Infeasible { rho: f64, g_bar: GBar },

    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },

    #[error("{0}")]
    Internal(String),

    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn output(path: impl Into<PathBuf>, source: impl Into<Box<dyn std::error::Error + Send + Sync>>) -> Self {
        CliError::Output {
            path: path.into(),
            source: source.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Infeasible { .. } => 4,
            CliError::Output { .. } | CliError::Internal(_) => 1,
            CliError::Core(e) => core_code(e),
        }
    }
}

fn core_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::FactorCountOutOfRange { .. } => 2,
        Error::Infeasible { .. } => 4,
        Error::Window { source, .. } => core_code(source),
        e if e.is_data_error() => 3,
        _ => 1,
    }
}

pub type CliResult<T> = Result<T, CliError>;
