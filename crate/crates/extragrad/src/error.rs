use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid set parameters: {0}")]
    InvalidSet(String),

    #[error("non-finite value at coordinates {coords:?}")]
    NonFinite { coords: Vec<usize> },

    #[error("point is not feasible (distance to set {dist:.3e})")]
    Infeasible { dist: f64 },

    #[error("candidate is not a solution: first-order condition violated by {violation:.3e}")]
    NotASolution { violation: f64 },

    #[error("iteration {t}: {msg}")]
    RunFailure { t: u64, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("closed-form inner solver requires an affine operator")]
    NotAffine,

    #[error("operation requires a declared saddle structure")]
    NotSaddle,

    #[error("rate fit: {0}")]
    RateFit(String),
}

pub type Result<T> = std::result::Result<T, Error>;
