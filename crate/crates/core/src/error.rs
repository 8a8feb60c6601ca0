use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e}, tolerance {tolerance:e})")]
    NotPositiveDefinite { min_eigenvalue: f64, tolerance: f64 },

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("summary has zero or negative trace ({trace:e})")]
    ZeroSummary { trace: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("task value must be non-negative, got {0}")]
    InvalidTaskValue(f64),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("linearization I - D W is singular (condition estimate {condition:e})")]
    SingularLinearization { condition: f64 },

    #[error("invalid restriction: requested {requested} columns from a family with {available}")]
    InvalidRestriction { requested: usize, available: usize },

    #[error("rank deficient: requested {requested}, numerical rank {rank}")]
    RankDeficient { requested: usize, rank: usize },

    #[error("invalid rank {requested} for dimension {dim}")]
    InvalidRank { requested: usize, dim: usize },

    #[error("family mismatch: {0} vs {1}")]
    FamilyMismatch(String, String),

    #[error("invalid probe set: {0}")]
    InvalidProbeSet(String),

    #[error("degenerate activations: {0}")]
    DegenerateActivations(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("grid axis '{axis}' has {len} values, needs at least {needed}")]
    GridTooSmall { axis: String, len: usize, needed: usize },

    #[error("basis is not orthonormal (max deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("class index {class} out of range for {n_classes} outputs")]
    ClassOutOfRange { class: usize, n_classes: usize },

    #[error("shape is undefined: {0}")]
    ShapeUndefined(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
