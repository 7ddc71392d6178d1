//! Error type shared across the toolkit.

use thiserror::Error;

/// Errors produced by model construction, estimation, and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid network description (dangling endpoints, disconnected graph, ...).
    #[error("topology error: {0}")]
    Topology(String),

    /// Out-of-range physical parameter (non-positive R, L, dt, variance, ...).
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Invalid configuration (empty sensor layout, bad estimator set, file schema).
    #[error("configuration error: {0}")]
    Config(String),

    /// Vector/matrix dimensions do not match the model.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// The batch regression is rank deficient; carries the rank report.
    #[error("unobservable system: rank {rank} < required {required}")]
    Unobservable { rank: usize, required: usize },

    /// Invalid area assignment.
    #[error("partition error: {0}")]
    Partition(String),

    /// Attack spec cannot be realized against the given sensor layout.
    #[error("attack infeasible: {0}")]
    AttackInfeasible(String),

    /// Message step index does not match the local estimator step.
    #[error("synchronization error: {0}")]
    Synchronization(String),

    /// Factorization failure (non-SPD innovation covariance and similar).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the CLI: 0 ok, 2 config error, 3 unobservable,
    /// 4 numerical failure, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Topology(_)
            | Error::Parameter(_)
            | Error::Config(_)
            | Error::Dimension { .. }
            | Error::Partition(_)
            | Error::AttackInfeasible(_) => 2,
            Error::Unobservable { .. } => 3,
            Error::Numerical(_) | Error::Synchronization(_) => 4,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => 1,
        }
    }
}
