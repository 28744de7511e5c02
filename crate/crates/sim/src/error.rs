//! Error types for the simulation crate.

use thiserror::Error;

/// Errors produced by world construction, routing, and dataset I/O.
#[derive(Debug, Error)]
pub enum SimError {
    /// The ego left the route corridor.
    #[error("ego is off route: {lateral_m:.2} m lateral offset")]
    OffRoute { lateral_m: f64 },

    /// A scenario identifier that no generator recognizes.
    #[error("unknown scenario id: {id:?}")]
    UnknownScenario { id: String },

    /// A scenario variant outside the generator's supported range.
    #[error("scenario {id:?} has no variant {variant}")]
    UnknownVariant { id: String, variant: u32 },

    /// Dataset container with an unsupported version stamp.
    #[error("unsupported dataset version {found} (expected {expected})")]
    DatasetVersion { found: u32, expected: u32 },

    /// Dataset container that fails structural validation.
    #[error("malformed dataset: {detail}")]
    MalformedDataset { detail: String },

    /// IO failure while reading or writing datasets.
    #[error("dataset io: {0}")]
    Io(#[from] std::io::Error),

    /// JSON failure while reading or writing manifests.
    #[error("manifest json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, SimError>;
