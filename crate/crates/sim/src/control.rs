//! PID tracking controller: converts a predicted trajectory and the current
//! speed into throttle, brake, and steering commands.

use serde::{Deserialize, Serialize};

use crate::types::{Trajectory, VehicleControls, WAYPOINT_SPACING_S};

/// Anti-windup bound on the integral term.
pub const INTEGRAL_CLAMP: f64 = 10.0;

/// Waypoint magnitude below which the whole trajectory counts as degenerate
/// (the planner predicted "stay put"), meters.
pub const DEGENERATE_WAYPOINT_M: f64 = 0.05;

/// PID gain triple.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

/// Steering controller gains.
pub const STEER_GAINS: PidGains = PidGains { kp: 1.25, ki: 0.75, kd: 0.3 };

/// Speed controller gains.
pub const SPEED_GAINS: PidGains = PidGains { kp: 5.0, ki: 0.5, kd: 1.0 };

/// One PID channel's persistent state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PidState {
    pub integral: f64,
    pub previous_error: f64,
    pub gains: PidGains,
}

impl PidState {
    pub fn new(gains: PidGains) -> Self {
        Self { integral: 0.0, previous_error: 0.0, gains }
    }

    /// Advance one tick: correction = Kp·e + Ki·∫e dt + Kd·(e − e_prev)/dt.
    /// The integral accumulates before use and is clamped for anti-windup.
    ///
    /// # Panics
    /// Panics on a non-finite error or non-positive `dt`.
    pub fn step(&mut self, error: f64, dt: f64) -> f64 {
        assert!(error.is_finite(), "PID error must be finite");
        assert!(dt > 0.0, "PID dt must be positive");
        self.integral = (self.integral + error * dt).clamp(-INTEGRAL_CLAMP, INTEGRAL_CLAMP);
        let derivative = (error - self.previous_error) / dt;
        self.previous_error = error;
        self.gains.kp * error + self.gains.ki * self.integral + self.gains.kd * derivative
    }
}

/// Both PID channels an episode carries across ticks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlState {
    pub steer: PidState,
    pub speed: PidState,
}

impl Default for ControlState {
    fn default() -> Self {
        Self { steer: PidState::new(STEER_GAINS), speed: PidState::new(SPEED_GAINS) }
    }
}

/// Convert a predicted ego-frame trajectory into actuator commands.
///
/// Desired speed comes from the 7th waypoint's distance over its time
/// offset; steering tracks the bearing of the 10th waypoint. A degenerate
/// trajectory (every waypoint at the origin) commands a full stop.
pub fn compute_controls(
    current_speed: f64,
    traj: &Trajectory,
    state: &mut ControlState,
    dt: f64,
) -> VehicleControls {
    if (0..traj.waypoints.len()).all(|i| traj.waypoint_norm(i) < DEGENERATE_WAYPOINT_M) {
        return VehicleControls::full_brake();
    }

    // 7th waypoint (index 6) sits 7 spacing intervals ahead in time.
    let desired_speed = traj.waypoint_norm(6) / (7.0 * WAYPOINT_SPACING_S);
    let speed_correction = state.speed.step(desired_speed - current_speed, dt);

    // 10th waypoint (index 9) sets the heading target.
    let [tx, ty] = traj.waypoints[9];
    let heading_error = ty.atan2(tx);
    let steer = state.steer.step(heading_error, dt).clamp(-1.0, 1.0);

    let (throttle, brake) = if speed_correction >= 0.0 {
        (speed_correction.clamp(0.0, 1.0), 0.0)
    } else {
        (0.0, (-speed_correction).clamp(0.0, 1.0))
    };
    VehicleControls { steer, throttle, brake }
}
