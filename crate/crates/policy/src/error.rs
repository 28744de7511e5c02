//! Error type shared by the policy crate.

use thiserror::Error;

/// Anything that can go wrong while building, training, or running the
/// driving policy.
#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("label {label} out of range for {upper} classes")]
    LabelOutOfRange { label: usize, upper: usize },

    #[error("dataset frames are missing {what} labels required by this stage")]
    MissingLabels { what: String },

    #[error("checkpoint version {found} unsupported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("malformed checkpoint: {detail}")]
    MalformedCheckpoint { detail: String },

    #[error("empty dataset: {detail}")]
    EmptyDataset { detail: String },

    #[error(transparent)]
    Sim(#[from] expertdrive_sim::SimError),

    #[error(transparent)]
    Numerics(#[from] expertdrive_numerics::NumericsError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, PolicyError>;
