use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the signal models, graph, spectral and dynamics code.
#[derive(Debug, Error)]
pub enum Error {
    /// A constructor argument violates a type invariant.
    #[error("invalid `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two inputs disagree on a length or shape.
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("agent {agent} out of range for a network of {n} agents")]
    AgentOutOfRange { agent: usize, n: usize },

    /// A structural precondition (connectivity, stochasticity) does not hold.
    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("power iteration did not converge after {iterations} iterations (last change {last_change:e})")]
    NotConverged { iterations: usize, last_change: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Every state has zero likelihood, so no posterior exists.
    #[error("degenerate evidence: all states have zero likelihood")]
    DegenerateEvidence,

    #[error("bayes estimate undefined: posterior beta is {0}")]
    DegeneratePrior(f64),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("scenario validation failed at `{field}`: {reason}")]
    Scenario { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn scenario(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Scenario {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NotConverged { .. } | Error::Numerical(_))
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
