use thiserror::Error;

/// Errors produced anywhere in the fitting, planning and release pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} failed)")]
    NotPositiveDefinite { pivot: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("label {label} at line {line} is outside 1..={k}")]
    LabelOutOfRange { line: usize, label: i64, k: usize },

    #[error("class {class} has no members")]
    EmptyClass { class: usize },

    #[error("class {class} has {size} members; at least 2 are required to fit a covariance")]
    DegenerateClass { class: usize, size: usize },

    #[error("point {index} has norm {norm} exceeding the clip bound {bound}")]
    ClipViolation { index: usize, norm: f64, bound: f64 },

    #[error("infeasible privacy budget for class {class}: {detail}")]
    InfeasibleBudget { class: usize, detail: String },

    #[error("class {class} has no adjacency constraints and no fallback bound")]
    DegenerateAdjacency { class: usize },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("schema mismatch at {path}: {message}")]
    Schema { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
