use thiserror::Error;

/// Errors produced by the simulation, transport and bound routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The averaged Lipschitz factor is not below one, so the dual Markov
    /// operator is not known to be a contraction.
    #[error("not contractive: contraction factor {r} is not below 1")]
    NotContractive { r: f64 },

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    ConvergenceFailure { iterations: usize, residual: f64 },

    #[error("exact transport limited to {cap} atoms but got {atoms}; use sinkhorn or a distance interval instead")]
    TooLarge { atoms: usize, cap: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
