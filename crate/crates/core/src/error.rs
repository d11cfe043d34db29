use thiserror::Error;

use crate::monotonicity::CycleCertificate;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid value in {field}: {reason}")]
    InvalidValue { field: String, reason: String },

    #[error("precondition violated at ({x}, {y}): {reason}")]
    Precondition { x: usize, y: usize, reason: String },

    #[error("infinite cost on support pair ({0}, {1})")]
    InfiniteOnSupport(usize, usize),

    #[error("zero mass on certificate pair ({0}, {1})")]
    ZeroMassOnCycle(usize, usize),

    #[error("cycle condition violated, total weight {}", .0.total_weight)]
    CycleViolation(CycleCertificate),

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error("size cap exceeded: {0}")]
    SizeCap(String),

    #[error("unknown instance `{0}`")]
    UnknownInstance(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("internal assertion failed: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidValue {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
