//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Domain generator preconditions violated or curve self-inconsistent.
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    /// Mesh construction request that cannot be honored.
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    /// Operator assembly failed (quadrature breakdown, mesh mismatch).
    #[error("assembly failed: {0}")]
    Assembly(String),

    /// Linear solve failed or is numerically meaningless.
    #[error("solve failed: {message}")]
    Solve {
        message: String,
        /// 1-norm condition estimate when one was obtained before failing.
        cond_estimate: Option<f64>,
    },

    /// Corner compression recursion did not stabilize.
    #[error("compression failed at level {level}: {message}")]
    Compression { level: usize, message: String },

    /// Source placement violates preconditions (e.g. dipole inside the domain).
    #[error("invalid source: {0}")]
    InvalidSource(String),

    /// Request outside the supported parameter range.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// An extrapolation or iteration failed to converge.
    #[error("did not converge: {0}")]
    NonConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;
