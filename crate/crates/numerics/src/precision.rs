//! Numeric precision modes.

use serde::{Deserialize, Serialize};

/// Storage precision for graph values and parameters.
///
/// `Double` keeps full f64 resolution and is the mode gradient-check
/// tolerances are pinned against. `Single` rounds the result of every
/// operation (and every optimizer update) to the nearest f32 value, which is
/// the mode training runs use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    /// Full 64-bit resolution.
    Double,
    /// Results rounded to the f32 grid after every operation.
    Single,
}

impl Default for Precision {
    fn default() -> Self {
        Precision::Single
    }
}
