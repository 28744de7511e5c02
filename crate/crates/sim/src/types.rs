//! Shared domain types: camera views, ego state, goals, controls, trajectories.

use serde::{Deserialize, Serialize};

/// Number of waypoints in a planned trajectory.
pub const TRAJECTORY_LEN: usize = 10;

/// Time spacing between trajectory waypoints, in seconds.
pub const WAYPOINT_SPACING_S: f64 = 0.2;

/// Length of the ego state history, in past records.
pub const EGO_HISTORY_LEN: usize = 4;

/// The six surround cameras, each covering a fixed 60-degree yaw sector.
///
/// The discriminant order is the routing class order everywhere: router
/// logits, annotation labels, and sector tie-breaks all use this index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraViewId {
    Front = 0,
    FrontLeft = 1,
    FrontRight = 2,
    Back = 3,
    BackLeft = 4,
    BackRight = 5,
}

/// Total number of camera views.
pub const NUM_VIEWS: usize = 6;

impl CameraViewId {
    /// All views in index order.
    pub const ALL: [CameraViewId; NUM_VIEWS] = [
        CameraViewId::Front,
        CameraViewId::FrontLeft,
        CameraViewId::FrontRight,
        CameraViewId::Back,
        CameraViewId::BackLeft,
        CameraViewId::BackRight,
    ];

    /// Routing-class index of this view.
    pub fn index(self) -> usize {
        self as usize
    }

    /// View for a routing-class index.
    ///
    /// # Panics
    /// Panics if the index is not in `0..6`.
    pub fn from_index(index: usize) -> Self {
        Self::ALL[index]
    }

    /// Yaw of the sector center relative to ego heading, in radians.
    /// Positive angles are to the left.
    pub fn sector_yaw(self) -> f64 {
        match self {
            CameraViewId::Front => 0.0,
            CameraViewId::FrontLeft => 60f64.to_radians(),
            CameraViewId::FrontRight => -60f64.to_radians(),
            CameraViewId::Back => 180f64.to_radians(),
            CameraViewId::BackLeft => 120f64.to_radians(),
            CameraViewId::BackRight => -120f64.to_radians(),
        }
    }

    /// Half-width of each view sector, in radians (sectors tile the circle).
    pub fn sector_half_width() -> f64 {
        30f64.to_radians()
    }

    /// The unique view whose sector contains a bearing (radians, ego frame,
    /// positive left). Boundary bearings belong to the lower view index.
    pub fn containing(bearing: f64) -> Self {
        let mut best: Option<CameraViewId> = None;
        for view in Self::ALL {
            let delta = wrap_angle(bearing - view.sector_yaw()).abs();
            // A tiny slack keeps exact boundary bearings inside both
            // adjacent sectors so the index tie-break below decides.
            if delta <= Self::sector_half_width() + 1e-12 && best.is_none() {
                best = Some(view);
            }
        }
        best.expect("sectors tile the full circle")
    }
}

/// Navigation commands attached to route positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManeuverCommand {
    Follow = 0,
    TurnLeft = 1,
    TurnRight = 2,
    ChangeLeft = 3,
    ChangeRight = 4,
}

/// Number of distinct maneuver commands.
pub const NUM_COMMANDS: usize = 5;

impl ManeuverCommand {
    /// Command index used in one-hot encodings.
    pub fn index(self) -> usize {
        self as usize
    }

    /// Command for an encoding index.
    ///
    /// # Panics
    /// Panics if the index is not in `0..5`.
    pub fn from_index(index: usize) -> Self {
        [
            ManeuverCommand::Follow,
            ManeuverCommand::TurnLeft,
            ManeuverCommand::TurnRight,
            ManeuverCommand::ChangeLeft,
            ManeuverCommand::ChangeRight,
        ][index]
    }
}

/// One snapshot of the ego vehicle's kinematic state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoRecord {
    /// World x position, meters.
    pub x: f64,
    /// World y position, meters.
    pub y: f64,
    /// Heading, radians counter-clockwise from +x.
    pub heading: f64,
    /// Forward speed, m/s (never negative).
    pub speed: f64,
    /// Longitudinal acceleration, m/s^2.
    pub accel: f64,
}

/// Current ego state plus a fixed-length history of past records.
///
/// The history always holds exactly [`EGO_HISTORY_LEN`] records, oldest
/// first; at episode start it is filled with copies of the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    /// Current kinematic record.
    pub current: EgoRecord,
    /// The previous [`EGO_HISTORY_LEN`] records, oldest first.
    pub history: [EgoRecord; EGO_HISTORY_LEN],
}

impl EgoState {
    /// State at episode start: history replicated from the initial record.
    pub fn initial(record: EgoRecord) -> Self {
        Self { current: record, history: [record; EGO_HISTORY_LEN] }
    }

    /// Shift the history and install a new current record.
    pub fn advance(&mut self, record: EgoRecord) {
        self.history.rotate_left(1);
        self.history[EGO_HISTORY_LEN - 1] = self.current;
        self.current = record;
    }

    /// Transform a world-frame point into the current ego frame
    /// (+x forward, +y left).
    pub fn world_to_ego(&self, x: f64, y: f64) -> (f64, f64) {
        let dx = x - self.current.x;
        let dy = y - self.current.y;
        let cos = self.current.heading.cos();
        let sin = self.current.heading.sin();
        (dx * cos + dy * sin, -dx * sin + dy * cos)
    }

    /// Transform an ego-frame point into the world frame.
    pub fn ego_to_world(&self, x: f64, y: f64) -> (f64, f64) {
        let cos = self.current.heading.cos();
        let sin = self.current.heading.sin();
        (self.current.x + x * cos - y * sin, self.current.y + x * sin + y * cos)
    }

    /// Bearing of a world point in the ego frame, radians, positive left.
    pub fn bearing_to(&self, x: f64, y: f64) -> f64 {
        let (ex, ey) = self.world_to_ego(x, y);
        ey.atan2(ex)
    }
}

/// Goal waypoint handed to the policy: a route point ahead of the ego,
/// expressed in the ego frame, plus the maneuver command active there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalWaypoint {
    /// Ego-frame x, meters (forward).
    pub x: f64,
    /// Ego-frame y, meters (left).
    pub y: f64,
    /// Maneuver command at the goal position.
    pub command: ManeuverCommand,
}

/// Actuation command for one simulation step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleControls {
    /// Normalized steering in `[-1, 1]`, positive left.
    pub steer: f64,
    /// Normalized throttle in `[0, 1]`.
    pub throttle: f64,
    /// Normalized brake in `[0, 1]`.
    pub brake: f64,
}

impl VehicleControls {
    /// Coasting: no steering, no pedals.
    pub fn coast() -> Self {
        Self { steer: 0.0, throttle: 0.0, brake: 0.0 }
    }

    /// Full brake with centered steering.
    pub fn full_brake() -> Self {
        Self { steer: 0.0, throttle: 0.0, brake: 1.0 }
    }
}

/// A planned trajectory: [`TRAJECTORY_LEN`] future positions in the ego
/// frame at [`WAYPOINT_SPACING_S`] spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Waypoints `(x, y)`, ego frame, nearest first.
    pub waypoints: [[f64; 2]; TRAJECTORY_LEN],
}

impl Trajectory {
    /// Trajectory with all waypoints at the origin (a degenerate "stay" plan).
    pub fn zeros() -> Self {
        Self { waypoints: [[0.0; 2]; TRAJECTORY_LEN] }
    }

    /// Euclidean norm of the i-th waypoint (0-based).
    pub fn waypoint_norm(&self, i: usize) -> f64 {
        let [x, y] = self.waypoints[i];
        (x * x + y * y).sqrt()
    }

    /// Mean Euclidean distance to another trajectory over waypoint pairs.
    pub fn mean_l2(&self, other: &Trajectory) -> f64 {
        let mut total = 0.0;
        for (a, b) in self.waypoints.iter().zip(&other.waypoints) {
            let dx = a[0] - b[0];
            let dy = a[1] - b[1];
            total += (dx * dx + dy * dy).sqrt();
        }
        total / TRAJECTORY_LEN as f64
    }
}

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(mut a: f64) -> f64 {
    use std::f64::consts::PI;
    while a > PI {
        a -= 2.0 * PI;
    }
    while a <= -PI {
        a += 2.0 * PI;
    }
    a
}
