//! Benchmark error type.

use thiserror::Error;

/// Errors from benchmark construction, episode rollout, or report I/O.
#[derive(Debug, Error)]
pub enum BenchError {
    #[error("policy produced a non-finite trajectory at tick {tick}")]
    NonFinitePlan { tick: usize },

    #[error("empty {what}")]
    Empty { what: String },

    #[error(transparent)]
    Sim(#[from] expertdrive_sim::SimError),

    #[error(transparent)]
    Policy(#[from] expertdrive_policy::PolicyError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;
