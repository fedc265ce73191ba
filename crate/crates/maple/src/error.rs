//! Crate-wide error type.
//!
//! Numerical failure modes (non-convergence, rank deficiency, loss domain
//! violations) are data-dependent and recoverable by callers — the solvers
//! react to [`Error::NotPositiveDefinite`] by shrinking the step, and the
//! sketching code reacts to rank-deficient blocks by re-drawing — so they are
//! errors rather than panics. Dimension mismatches on internal matrix
//! arithmetic are programmer errors and assert instead.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shapes of user-supplied data disagree (operator vs. matrix, trace vs. config, ...).
    #[error("dimension mismatch in {op}: {details}")]
    DimMismatch { op: &'static str, details: String },

    /// The input violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArg(String),

    /// Symmetric eigenvalue iteration exceeded its sweep budget.
    #[error("eigenvalue iteration stalled at index {index} (off-diagonal residual {residual:.3e})")]
    NoConvergence { index: usize, residual: f64 },

    /// A triangular factor has a negligible diagonal entry.
    #[error("rank-deficient factor: |R[{index},{index}]| = {value:.3e} is below {threshold:.3e}")]
    RankDeficient { index: usize, value: f64, threshold: f64 },

    /// Matrix expected symmetric was not, beyond roundoff.
    #[error("matrix not symmetric: max asymmetry {max_asym:.3e} exceeds {tol:.3e}")]
    NotSymmetric { max_asym: f64, tol: f64 },

    /// A matrix that must be positive definite is not; carries a (possibly
    /// crude) estimate of its smallest eigenvalue for step-size diagnostics.
    #[error("matrix not positive definite (min eigenvalue ≈ {min_eig:.6e})")]
    NotPositiveDefinite { min_eig: f64 },

    /// NaN or Inf appeared where finite values are required.
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    /// A solver stopped before producing an estimate.
    #[error("solver aborted at iteration {iter}: {reason}")]
    SolverAbort { iter: usize, reason: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed text input (CSV matrix, config file).
    #[error("parse error at {}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },

    /// Binary matrix file with a wrong magic, size, or header.
    #[error("bad matrix file: {0}")]
    BadFormat(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
