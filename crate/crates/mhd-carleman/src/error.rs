//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Domain or grid construction rejected (too few cells, nonpositive sizes, ...).
    #[error("domain sizing: {0}")]
    Sizing(String),

    /// Two objects that must share a grid/domain do not.
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    /// A weight-generator or cut-off precondition failed.
    #[error("weight construction: {0}")]
    Weight(String),

    /// A theorem/lemma hypothesis was violated before a sweep.
    #[error("hypothesis violation: {0}")]
    Hypothesis(String),

    /// Iterative solver did not reach its tolerance.
    #[error("solver non-convergence: {0}")]
    SolverDiverged(String),

    /// Time-step restriction for the explicit terms violated.
    #[error("CFL violation: {0}")]
    Cfl(String),

    /// Experiment configuration is structurally invalid.
    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 for config/schema problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Sizing(_) | Error::Io(_) => 2,
            _ => 3,
        }
    }
}
