//! Unified error type for the library.

use thiserror::Error;

/// Errors surfaced by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Argument on the logarithmic branch cut `(-inf, 0]`.
    #[error("argument {0} lies on the branch cut (-inf, 0]")]
    BranchCut(String),

    /// A special-function value exceeded the overflow guard.
    #[error("overflow at order {order}: |value| > 1e300")]
    Overflow { order: usize },

    /// An iteration failed to converge.
    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// Invalid geometry (self-intersection, containment violation, ...).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Mesh generation could not satisfy the quality contract.
    #[error("mesh quality failure: {detail}")]
    MeshQuality { detail: String },

    /// Text-format parse failure.
    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },

    /// A mesh or matrix invariant was violated.
    #[error("invalid {what}: {detail}")]
    Invalid { what: &'static str, detail: String },

    /// A factorization or near-singular denominator failed.
    #[error("singular system: {0}")]
    Singular(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Convenience alias.
pub type Result<T> = std::result::Result<T, Error>;
