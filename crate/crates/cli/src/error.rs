use std::path::Path;

use thiserror::Error;

/// Failures of the runner, grouped by the process exit code they map to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io { .. } => 3,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Wraps a library error, keeping its exit class and adding `context`.
    pub fn core(context: impl std::fmt::Display, err: ipsrf::Error) -> Self {
        let msg = format!("{context}: {err}");
        match err {
            ipsrf::Error::InvalidInput(_) | ipsrf::Error::NotContractive { .. } => {
                CliError::Config(msg)
            }
            ipsrf::Error::ConvergenceFailure { .. } | ipsrf::Error::TooLarge { .. } => {
                CliError::Numerical(msg)
            }
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
