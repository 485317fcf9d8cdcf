//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector has no positive entry")]
    ZeroVector,

    #[error("matrix has no positive entry")]
    ZeroMatrix,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("entry {0} is negative or not finite")]
    InvalidEntry(f64),

    #[error("not a probability vector: coordinates sum to {0}")]
    NotProbabilityVector(f64),

    #[error("contraction witness unavailable: {0}")]
    WitnessUnavailable(&'static str),

    #[error("running product collapsed to the zero matrix")]
    ProductCollapsed,

    #[error("estimator collapsed: {0}")]
    EstimatorCollapsed(String),

    #[error("not primitive within horizon of {horizon} steps")]
    NotPrimitive { horizon: u64 },

    #[error("too few points for a slope fit: needed {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("finite range too large to enumerate ({0}); use Monte Carlo sampling instead")]
    RangeTooLarge(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate process: {0}")]
    DegenerateProcess(String),

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
