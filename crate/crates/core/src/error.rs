use thiserror::Error;

/// Errors produced by the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid interval: need b > a, got a = {a}, b = {b}")]
    InvalidInterval { a: f64, b: f64 },

    #[error("quadrature did not reach tolerance {tolerance:e} (estimated error {estimate:e} after {intervals} intervals)")]
    Tolerance {
        tolerance: f64,
        estimate: f64,
        intervals: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("perturbation direction must be nonzero")]
    ZeroDirection,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("solution exploded at step {step} (t = {time})")]
    Explosion { step: usize, time: f64 },

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("all {paths} paths aborted; no estimate available")]
    EstimationFailed { paths: usize },

    #[error("degenerate fit window starting at index {start}")]
    DegenerateFit { start: usize },
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> LabError {
    LabError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
