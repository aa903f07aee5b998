use thiserror::Error;

/// Errors raised by economies, preferences, mechanisms and the estimation
/// pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("infeasible: available mass {available} is below capacity {capacity}")]
    Infeasible { available: f64, capacity: f64 },

    #[error("allocation integrity violated: {0}")]
    Integrity(String),

    #[error("policy is not monotone: {0}")]
    NotMonotone(String),

    #[error("diversity utility of group {group} is not concave; use the brute-force oracle")]
    NotConcave { group: usize },

    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("state {index}: {source}")]
    InState {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn in_state(index: usize, source: Error) -> Self {
        Error::InState {
            index,
            source: Box::new(source),
        }
    }

    /// True for failures of an iterative numerical routine, as opposed to
    /// bad input.
    pub fn is_convergence_failure(&self) -> bool {
        match self {
            Error::NoConvergence { .. } => true,
            Error::InState { source, .. } => source.is_convergence_failure(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
