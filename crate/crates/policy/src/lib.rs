//! Neural driving policy: a transformer backbone over multi-view raster
//! tokens feeding two sparse mixture-of-experts stages — a camera-view
//! router on the vision side and per-layer skill experts inside the
//! trajectory decoder — trained with flow matching plus router losses.

pub mod error;
pub mod action_moe;
pub mod backbone;
pub mod data;
pub mod nn;
pub mod model;
pub mod planner;
pub mod synth;
pub mod trainer;
pub mod vision_moe;

pub use data::{samples_from_dataset, split_by_episode, TrainSample};
pub use error::{PolicyError, Result};
pub use model::{DriveModel, GateMode, LossWeights, ModelConfig, PrefixCache, ViewPlan};
pub use planner::TrajectoryNormalizer;
pub use trainer::{MetricsLogger, TrainConfig, Trainer};
