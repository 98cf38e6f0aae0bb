use crate::glasso::GlassoSolution;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A Cholesky pivot fell below the positive-definiteness floor. Signals a
    /// degenerate covariance or precision matrix.
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    /// The graphical lasso exhausted its sweep budget. The partially converged
    /// solution and its diagnostics are carried along so callers can decide
    /// whether to use it.
    #[error("graphical lasso did not converge within {} sweeps (max KKT violation {:.3e})",
            .0.iterations, .0.max_kkt_violation)]
    NotConverged(Box<GlassoSolution>),

    /// Malformed numeric input (NaN, negative variance, impossible shape).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// All unnormalized component masses of a responsibility row underflowed.
    #[error("responsibility row {row} is degenerate (all component masses underflowed)")]
    DegenerateResponsibility { row: usize },

    /// A component's total responsibility mass dropped below the collapse floor.
    #[error("cluster {cluster} collapsed (mass {mass:.6e} below floor {floor:.6e})")]
    ClusterCollapse {
        cluster: usize,
        mass: f64,
        floor: f64,
    },

    /// Two objects that must agree on a dimension do not.
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    /// Bad configuration supplied by a caller or the command line.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A data file failed to parse; `row` is 1-based and counts every line.
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
