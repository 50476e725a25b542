use thiserror::Error;

/// Errors raised by samplers, couplings and the spectral tooling.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("argument outside the admissible domain: {0}")]
    Domain(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("the origin is not a valid state for this target")]
    Origin,

    #[error("point with radius {radius} lies outside the target support")]
    OutOfSupport { radius: f64 },

    #[error("slice is empty at log threshold {log_t}")]
    EmptySlice { log_t: f64 },

    #[error("not available: {0}")]
    NotAvailable(String),

    #[error("direction rejection sampler exceeded {0} proposals")]
    RejectionBudget(usize),

    #[error("degenerate coupled pair: the two states coincide")]
    DegeneratePair,

    #[error("unsupported target family for this operation: {0}")]
    UnsupportedFamily(String),

    #[error("level-set function is not in Lambda_{k}")]
    NotInLambdaK { k: f64 },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("series too short: {len} values, at least {min} required")]
    SeriesTooShort { len: usize, min: usize },

    #[error("series has zero variance")]
    DegenerateSeries,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
