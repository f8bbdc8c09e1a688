//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Manifold dimensions must satisfy m > r >= 1.
    #[error("invalid manifold dimensions: need m > r >= 1, got m={m}, r={r}")]
    InvalidDimensions { m: usize, r: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    /// The two subspaces share a principal angle at (or numerically at) the
    /// cut locus pi/2, so the logarithm map formula is undefined for them.
    #[error("subspace overlap is singular: smallest singular value {min_sv:.3e} below cut-locus tolerance")]
    SingularOverlap { min_sv: f64 },

    /// Normal matrix of a per-column least-squares system is singular.
    /// Happens only with reg = 0 and an under-observed column.
    #[error("singular normal matrix for column {col}; set reg > 0")]
    SingularColumn { col: usize },

    #[error("W^T W + rho I is not positive definite")]
    NotPositiveDefinite,

    #[error("held-out set is empty")]
    EmptyHeldout,

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    #[error("sampling infeasible: requested {requested} entries from a {rows}x{cols} grid")]
    InfeasibleSampling {
        requested: usize,
        rows: usize,
        cols: usize,
    },

    #[error("invalid observations: {0}")]
    InvalidObservations(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
