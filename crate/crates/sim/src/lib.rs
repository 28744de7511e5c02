//! Deterministic 2D driving simulator: kinematic ego vehicle, scripted
//! traffic, procedural scenarios, multi-view raster sensors, rule-based
//! ground-truth annotation, a privileged demonstration driver, and an
//! on-disk dataset container.

pub mod annotate;
pub mod control;
pub mod dataset;
pub mod dynamics;
pub mod error;
pub mod expert;
pub mod infraction;
pub mod raster;
pub mod route;
pub mod scenario;
pub mod types;
pub mod world;

pub use annotate::{
    annotate_camera, annotate_skill, scenario_catalogue, FrameContext, LaneSide, SkillLabel,
    OBSTACLE_AHEAD_THRESHOLD_M,
};
pub use control::{compute_controls, ControlState, PidGains, PidState};
pub use dataset::{
    frames_from_rollout, Dataset, DatasetManifest, EpisodeMeta, Frame, DATASET_VERSION,
    LABEL_STRIDE_TICKS,
};
pub use dynamics::{step_dynamics, VehicleParams};
pub use error::{Result, SimError};
pub use expert::{run_expert_episode, EpisodeRollout, ExpertDriver, TickRecord, COMPLETION_DONE};
pub use infraction::{obb_intersects, Infraction, InfractionKind, InfractionTracker};
pub use raster::{
    render_views, ViewRaster, CH_AGENTS, CH_DRIVABLE, CH_MARKING, CH_ROUTE, CH_SIGNAL,
    RASTER_CHANNELS, RASTER_RANGE_M, RASTER_SIZE,
};
pub use route::{CommandSpan, RoutePlan, GOAL_LOOKAHEAD_M, OFF_ROUTE_TOLERANCE_M};
pub use scenario::{
    build_scenario, spawn_scenario, ScenarioSpec, GENERATED_SCENARIOS, SCENARIO_SPEC_VERSION,
    SPEED_LIMIT, VARIANTS_PER_SCENARIO,
};
pub use types::{
    wrap_angle, CameraViewId, EgoRecord, EgoState, GoalWaypoint, ManeuverCommand, Trajectory,
    VehicleControls, EGO_HISTORY_LEN, NUM_COMMANDS, NUM_VIEWS, TRAJECTORY_LEN,
    WAYPOINT_SPACING_S,
};
pub use world::{
    Agent, AgentKind, AgentSnapshot, BehaviorScript, JunctionBox, LaneOccupancy, LightPhase,
    RoadSegment, StaticMap, StopSign, TrafficLight, WorldState, LANE_WIDTH_M, SIM_DT_S,
};
