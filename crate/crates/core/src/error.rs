use thiserror::Error;

/// Errors raised by geometry, sampling and statistics routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {0} is not in the open unit disk (|z| must be < 1 - 1e-14)")]
    OutsideDisk(String),
    #[error("point {0} is not in the open upper half-plane (Im w must be > 1e-14)")]
    OutsideHalfPlane(String),
    #[error("degenerate Mobius matrix: ad - bc = 0")]
    DegenerateMobius,
    #[error("model mismatch: {0}")]
    ModelMismatch(&'static str),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("input to {0} must be sorted in nondecreasing order")]
    Unsorted(&'static str),
    #[error("not enough samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("index {index} out of range for length {len}")]
    OutOfRange { index: usize, len: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
