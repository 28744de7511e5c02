//! Kinematic bicycle model for the ego vehicle.

use serde::{Deserialize, Serialize};

use crate::types::{EgoRecord, VehicleControls};

/// Physical parameters of the simulated vehicle.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Wheelbase, meters (rear-axle reference point).
    pub wheelbase: f64,
    /// Maximum front-wheel steering angle, radians.
    pub max_steer: f64,
    /// Peak engine acceleration at full throttle, m/s^2.
    pub max_accel: f64,
    /// Peak braking deceleration at full brake, m/s^2.
    pub max_brake: f64,
    /// Linear drag coefficient, 1/s (deceleration = drag * speed).
    pub drag: f64,
    /// Footprint length, meters.
    pub length: f64,
    /// Footprint width, meters.
    pub width: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 2.5,
            max_steer: 35f64.to_radians(),
            max_accel: 3.0,
            max_brake: 6.0,
            drag: 0.05,
            length: 4.5,
            width: 2.0,
        }
    }
}

impl VehicleParams {
    /// Turning radius under constant normalized steering, meters.
    ///
    /// # Panics
    /// Panics when the steering angle is zero (a straight line).
    pub fn turn_radius(&self, steer: f64) -> f64 {
        let delta = steer.clamp(-1.0, 1.0) * self.max_steer;
        assert!(delta != 0.0, "turn_radius is undefined for zero steering");
        self.wheelbase / delta.tan().abs()
    }
}

/// Advance the ego state by one explicit-Euler step of the kinematic
/// bicycle model.
///
/// Steering is clamped to `[-1, 1]` and pedals to `[0, 1]`. Longitudinal
/// acceleration is `max_accel * throttle - max_brake * brake - drag * v`;
/// speed never drops below zero (no reverse gear). Position and heading
/// integrate with the speed at the start of the step; heading rate is
/// `v * tan(steer * max_steer) / wheelbase`.
pub fn step_dynamics(
    state: &EgoRecord,
    controls: &VehicleControls,
    params: &VehicleParams,
    dt: f64,
) -> EgoRecord {
    assert!(dt > 0.0, "step_dynamics requires a positive dt, got {dt}");
    let steer = controls.steer.clamp(-1.0, 1.0);
    let throttle = controls.throttle.clamp(0.0, 1.0);
    let brake = controls.brake.clamp(0.0, 1.0);

    let delta = steer * params.max_steer;
    let accel = params.max_accel * throttle - params.max_brake * brake - params.drag * state.speed;

    let x = state.x + state.speed * state.heading.cos() * dt;
    let y = state.y + state.speed * state.heading.sin() * dt;
    let heading = crate::types::wrap_angle(state.heading + state.speed * delta.tan() / params.wheelbase * dt);
    let speed = (state.speed + accel * dt).max(0.0);
    // Report the acceleration actually realized (zero-floor aware).
    let realized_accel = (speed - state.speed) / dt;

    EgoRecord { x, y, heading, speed, accel: realized_accel }
}
