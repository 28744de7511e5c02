//! Numeric substrate for the expertdrive stack: dense arrays, a reverse-mode
//! autodiff tape, deterministic RNG streams, an Adam-style optimizer, and a
//! finite-difference gradient checker.
//!
//! The crate is deliberately small and self-contained. Models are built by
//! recording operations on a [`Graph`]; trainable weights live in a
//! [`ParamStore`] and receive gradients through [`Graph::backprop`]. All
//! randomness flows through [`DetRng`] streams derived from explicit seeds.

mod array;
mod error;
mod fdcheck;
mod graph;
mod optim;
mod params;
mod precision;
mod rng;

pub use array::Array;
pub use error::{NumericsError, Result};
pub use fdcheck::finite_diff_check;
pub use graph::{Graph, NodeId};
pub use optim::{AdamOptimizer, OptimizerConfig};
pub use params::{ParamId, ParamStore, Parameter};
pub use precision::Precision;
pub use rng::DetRng;
