use thiserror::Error;

/// Errors produced across the library.
#[derive(Debug, Error)]
pub enum DnoError {
    #[error("precision context requires at least 24 mantissa bits, got {0}")]
    PrecisionTooLow(u32),
    #[error("failed to parse decimal scalar {text:?}: {reason}")]
    ScalarParse { text: String, reason: String },
    #[error("grid requires M >= 4, got {0}")]
    GridTooSmall(usize),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is singular at working precision (pivot {pivot} at step {step})")]
    SingularMatrix { step: usize, pivot: String },
    #[error("Jacobi SVD did not converge after {sweeps} sweeps (max off-diagonal cosine {residual})")]
    SvdNoConvergence { sweeps: usize, residual: String },
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    #[error("invalid surface file: {0}")]
    SurfaceFile(String),
    #[error("surface parametrization is singular: {0}")]
    SingularSurface(String),
    #[error("pole of the exact solution lies on the sampled surface near x = {0}")]
    PoleOnSurface(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("precision-insufficient diagnostic: {0}")]
    PrecisionInsufficient(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DnoError>;
