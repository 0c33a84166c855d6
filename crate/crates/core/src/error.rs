use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("operator is not Hermitian (deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("operator is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("trace is {trace}, expected 1")]
    InvalidTrace { trace: f64 },

    #[error("state vector norm is {norm}, expected 1")]
    NotNormalized { norm: f64 },

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("size limit exceeded: {size} > cap {cap}")]
    SizeLimitExceeded { size: usize, cap: usize },

    #[error("size mismatch: {what} (expected {expected}, got {actual})")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("POVM element {index}: {reason}")]
    InvalidPovmElement { index: usize, reason: String },

    #[error("POVM elements do not sum to identity (deviation {deviation:e})")]
    Incomplete { deviation: f64 },

    #[error("sub-POVM elements exceed identity (max eigenvalue of sum {max_eigenvalue})")]
    ExceedsIdentity { max_eigenvalue: f64 },

    #[error("outcome function entry {index} maps to {image}, outside 0..{image_size}")]
    InvalidOutcomeMap {
        index: usize,
        image: usize,
        image_size: usize,
    },

    #[error("outcome function image is not contiguous: index {missing} unused")]
    NonContiguousImage { missing: usize },

    #[error("outcome probability {prob:e} is negligible")]
    NegligibleProbability { prob: f64 },

    #[error("conditional branch {outcome} has a zero coarse-grained element")]
    EmptyBranch { outcome: usize },

    #[error("outcome label sets differ")]
    LabelMismatch,

    #[error("not a probability distribution: {reason}")]
    NotADistribution { reason: String },

    #[error("typical set has zero total probability")]
    EmptySupport,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("rate expression error: {0}")]
    RateExpression(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
