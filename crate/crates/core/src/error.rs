use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {what} ({left} vs {right})")]
    DimensionMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    /// Cholesky factorization broke down at `pivot` even after one jitter retry.
    #[error("matrix is not positive definite (factorization failed at pivot {pivot})")]
    Singular { pivot: usize },

    #[error("base kernel is not positive semi-definite: min eigenvalue {min_eig:e}, max eigenvalue {max_eig:e}")]
    BaseKernelViolation { min_eig: f64, max_eig: f64 },

    #[error("evaluation budget of {budget} FLG evaluations exceeded at level {level}")]
    BudgetExceeded { level: usize, budget: u64 },

    #[error("Gram computation aborted after {completed} of {total} entries: {source}")]
    GramAborted {
        completed: usize,
        total: usize,
        source: Box<Error>,
    },

    #[error("cannot sample {requested} vertices from a pool of {available}")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("missing required file {0}")]
    MissingFile(PathBuf),

    #[error("class {class} has no training examples in fold {fold}")]
    Stratification { class: usize, fold: usize },

    #[error("SVM solver did not converge after {iterations} iterations (KKT gap {gap:e})")]
    NonConvergence { iterations: usize, gap: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
