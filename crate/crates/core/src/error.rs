use thiserror::Error;

/// Errors raised by the geometry engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("matrix is not symmetric (asymmetry {asymmetry:.3e} exceeds {tolerance:.1e})")]
    NonSymmetricInput { asymmetry: f64, tolerance: f64 },

    #[error("point {point:?} lies outside the chart domain")]
    OutsideDomain { point: Vec<f64> },

    #[error("invalid warped-product spec: {0}")]
    InvalidSpec(String),

    #[error("degenerate immersion at node {node}: induced metric is not positive definite")]
    DegenerateImmersion { node: usize },

    #[error("scalar fields live on different leaves")]
    MismatchedLeaf,

    #[error("case not applicable: {0}")]
    CaseNotApplicable(String),

    #[error("vector field is not conformal (deviation {deviation:.3e})")]
    NotConformal { deviation: f64 },

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("leaves do not share a constant S_(r+1): {0}")]
    LeavesNotEquicurved(String),

    #[error("expression error: {0}")]
    Expr(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

pub type Result<T> = std::result::Result<T, GeomError>;
