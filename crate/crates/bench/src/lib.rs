//! Closed-loop driving benchmark: episode runner, scoring, and reports.
//!
//! A policy produces ego-frame trajectories from rendered observations; the
//! runner replays them through the simulator under the same control stack
//! and infraction rules as the privileged expert, then aggregates per-route
//! results into driving-score / success-rate / efficiency / comfort reports
//! with per-skill breakdowns.

pub mod closed_loop;
pub mod error;
pub mod metrics;
pub mod policy;
pub mod report;
pub mod suite;

pub use closed_loop::{run_episode, REPLAN_INTERVAL_TICKS};
pub use error::{BenchError, Result};
pub use metrics::{comfort, driving_score, efficiency, open_loop_l2, ComfortLimits};
pub use policy::{NeuralPolicy, Observation, RouteFollowPolicy, TrajectoryPolicy, ZeroPolicy};
pub use report::{router_accuracy, BenchmarkReport, EpisodeReport, SkillBucket};
pub use suite::{benchmark_routes, route_scenario, run_benchmark, RouteSpec};
