//! Error type for array and autodiff operations.

use thiserror::Error;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, NumericsError>;

/// Errors surfaced by array construction, backprop, and the gradient checker.
#[derive(Debug, Error)]
pub enum NumericsError {
    /// An operation received arrays whose shapes cannot be combined.
    #[error("shape mismatch in {context}: {detail}")]
    ShapeMismatch { context: &'static str, detail: String },

    /// Backprop was asked to start from a non-scalar node.
    #[error("backprop requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    /// The finite-difference checker was given a non-positive step size.
    #[error("finite-difference step must be positive, got {eps}")]
    InvalidEps { eps: f64 },
}
