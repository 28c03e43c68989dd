use thiserror::Error;

use crate::solver::FixedPoint;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("dimension mismatch: expected n = {expected}, found n = {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("quadrature order {order} too small, need at least {required}")]
    InsufficientQuadrature { order: usize, required: usize },

    #[error("truncation {requested} exceeds available degree {available}")]
    TruncationExceeded { requested: usize, available: usize },

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("kernel is stable, no negative coefficient up to degree {truncation}")]
    StableKernel { truncation: usize },

    #[error("density is not positive at node {index} (value {value})")]
    NonPositiveDensity { index: usize, value: f64 },

    #[error("density mass {mass} differs from 1")]
    MassMismatch { mass: f64 },

    #[error("fixed-point iteration did not converge: residual {} after {} iterations", .0.residual, .0.iterations)]
    NotConverged(Box<FixedPoint>),

    #[error("particle step degenerated: {0}")]
    DegenerateStep(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of a numerical procedure, as opposed to invalid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Overflow(_)
                | Error::NotConverged(_)
                | Error::DegenerateStep(_)
                | Error::NonPositiveDensity { .. }
                | Error::NonFinite(_)
        )
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
