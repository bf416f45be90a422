//! Crate-wide error type.
//!
//! Programmer errors (shape mismatches, out-of-range indices) panic with a
//! message naming the offending dimensions; everything that can fail on valid
//! code paths — iterative solvers, data-dependent preconditions, numeric
//! blow-ups during a run, IO — comes back as an [`Error`].

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An iterative eigen/singular solver hit its sweep cap before the
    /// off-diagonal mass fell under tolerance.
    #[error("eigensolver did not converge: off-diagonal residual {residual:.3e} after {sweeps} sweeps")]
    NonConvergence { residual: f64, sweeps: usize },

    /// A matrix failed the mixing-matrix checks (symmetry, stochasticity).
    #[error("invalid mixing matrix: {0}")]
    InvalidMixingMatrix(String),

    /// A data-dependent precondition failed (e.g. a block that must be
    /// shared across clients differs).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A loss or gradient stopped being finite mid-run; carries provenance.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Configuration validation failures, all collected at once.
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    InvalidConfig(Vec<String>),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {detail}")]
    Malformed { what: String, detail: String },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
