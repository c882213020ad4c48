use thiserror::Error;

use crate::timefun::{EvalError, ParseError};

/// Errors raised by the numerical engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("block dimension {dim} exceeds the configured cap {cap}")]
    CapExceeded { dim: usize, cap: usize },

    #[error("non-finite value at s = {s}: {context}")]
    NonFinite { s: f64, context: String },

    #[error("missing lower-order moment {0}")]
    MissingMoment(String),

    #[error("dominating intensity bound exceeded at t = {t} in state {state}")]
    BoundExceeded { t: f64, state: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
