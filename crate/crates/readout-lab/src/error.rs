//! Crate-wide error type.
//!
//! Variants are grouped by how the CLI maps them to exit codes: input and
//! parameter problems are usage errors (exit 2), numerical failures are
//! computational errors (exit 1). The mapping itself lives in [`crate::cli`].

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Cholesky factorization hit a non-positive pivot.
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    /// An iterative solver hit its iteration cap before reaching tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// A caller-supplied parameter is out of its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// Matrix shapes disagree with what the operation requires.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A class in a support set has zero examples.
    #[error("class {class} has no support examples")]
    ClassWithoutSupport { class: usize },

    /// Fewer distinct classes than the operation needs.
    #[error("insufficient classes: {0}")]
    InsufficientClasses(String),

    /// Episode sampling could not satisfy its contract.
    #[error("sampling failed: {0}")]
    Sampling(String),

    /// Episode assembly referenced an embedding that does not exist.
    #[error("missing embedding for {0}")]
    MissingEmbedding(String),

    /// Geometry too degenerate to analyze (e.g. all prototypes identical).
    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    /// An optimizer produced a non-finite objective.
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    /// Gradient descent diverged.
    #[error("optimization diverged: {0}")]
    Diverged(String),

    /// Malformed input file.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
