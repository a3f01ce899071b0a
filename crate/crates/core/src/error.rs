use thiserror::Error;

use crate::continuation::ContinuationTrace;
use crate::limit::LimitReport;

/// Which clause of the standing hypothesis a configuration violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    /// The weight must not vanish on the boundary.
    WeightOnBoundary,
    /// The exponent gap condition between `p`, `q` and the dimension.
    ExponentGap,
}

impl std::fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Hypothesis::WeightOnBoundary => write!(f, "a(x) ≠ 0 on ∂Ω"),
            Hypothesis::ExponentGap => write!(f, "q/p < 1 + 1/N"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh parameters: {0}")]
    InvalidMesh(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("fields live on different meshes")]
    MeshMismatch,

    #[error("invalid exponents: {0}")]
    InvalidExponents(String),

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("hypothesis (H) violated: {clause} ({detail})")]
    Hypothesis { clause: Hypothesis, detail: String },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("the p,q energy requires an exponent p")]
    MissingP,

    #[error("the smoothed limit energy needs ε > 0 for derivatives")]
    ZeroSmoothing,

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("line search failed to find descent at iteration {iteration}")]
    LineSearch { iteration: usize },

    #[error(
        "Newton iteration did not converge in {iterations} steps (gradient norm {grad_norm:e})"
    )]
    NotConverged { iterations: usize, grad_norm: f64 },

    #[error("continuation aborted at step {step} (p = {p}): {source}")]
    Continuation {
        step: usize,
        p: f64,
        #[source]
        source: Box<Error>,
        partial: Box<ContinuationTrace>,
    },

    #[error("limit solve aborted at ε = {eps}: {source}")]
    LimitAborted {
        eps: f64,
        #[source]
        source: Box<Error>,
        partial: Box<LimitReport>,
    },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("boundary trace mismatch at node {node}: {found} vs {expected}")]
    TraceMismatch {
        node: usize,
        found: f64,
        expected: f64,
    },

    #[error("oracle infeasible: {0}")]
    OracleInfeasible(String),

    #[error("{0}")]
    Diagnostics(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
