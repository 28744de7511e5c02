//! Route representation: a polyline with arc-length parameterization and
//! maneuver commands attached to arc-length ranges.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::types::{EgoState, GoalWaypoint, ManeuverCommand};

/// Maximum lateral deviation from the route before the ego counts as
/// off-route, meters.
pub const OFF_ROUTE_TOLERANCE_M: f64 = 6.0;

/// Default lookahead used when extracting goal waypoints, meters.
pub const GOAL_LOOKAHEAD_M: f64 = 20.0;

/// A maneuver command active over an arc-length range `[from_s, to_s)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CommandSpan {
    pub from_s: f64,
    pub to_s: f64,
    pub command: ManeuverCommand,
}

/// Polyline route with cumulative arc length and command annotations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoutePlan {
    points: Vec<[f64; 2]>,
    /// Cumulative arc length at each point; same length as `points`.
    cumulative_s: Vec<f64>,
    /// Non-overlapping command spans, ascending; gaps default to `Follow`.
    spans: Vec<CommandSpan>,
}

impl RoutePlan {
    /// Build a route from polyline vertices and command spans.
    ///
    /// # Panics
    /// Panics if fewer than two vertices are given or consecutive vertices
    /// coincide.
    pub fn new(points: Vec<[f64; 2]>, spans: Vec<CommandSpan>) -> Self {
        assert!(points.len() >= 2, "a route needs at least two vertices");
        let mut cumulative_s = Vec::with_capacity(points.len());
        let mut s = 0.0;
        cumulative_s.push(0.0);
        for pair in points.windows(2) {
            let seg = ((pair[1][0] - pair[0][0]).powi(2) + (pair[1][1] - pair[0][1]).powi(2)).sqrt();
            assert!(seg > 1e-9, "route vertices must be distinct");
            s += seg;
            cumulative_s.push(s);
        }
        Self { points, cumulative_s, spans }
    }

    /// Route vertices.
    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Command spans.
    pub fn spans(&self) -> &[CommandSpan] {
        &self.spans
    }

    /// Total arc length, meters.
    pub fn total_length(&self) -> f64 {
        *self.cumulative_s.last().expect("non-empty route")
    }

    /// Position on the route at clamped arc length `s`.
    pub fn position_at(&self, s: f64) -> [f64; 2] {
        let s = s.clamp(0.0, self.total_length());
        let idx = match self.cumulative_s.binary_search_by(|v| v.partial_cmp(&s).unwrap()) {
            Ok(i) => i.min(self.points.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.points.len() - 2),
        };
        let seg_len = self.cumulative_s[idx + 1] - self.cumulative_s[idx];
        let t = if seg_len > 0.0 { (s - self.cumulative_s[idx]) / seg_len } else { 0.0 };
        let a = self.points[idx];
        let b = self.points[idx + 1];
        [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]
    }

    /// Route tangent direction (unit vector) at clamped arc length `s`.
    pub fn tangent_at(&self, s: f64) -> [f64; 2] {
        let s = s.clamp(0.0, self.total_length());
        let idx = match self.cumulative_s.binary_search_by(|v| v.partial_cmp(&s).unwrap()) {
            Ok(i) => i.min(self.points.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.points.len() - 2),
        };
        let a = self.points[idx];
        let b = self.points[idx + 1];
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        [(b[0] - a[0]) / len, (b[1] - a[1]) / len]
    }

    /// Command active at arc length `s` (`Follow` outside every span).
    pub fn command_at(&self, s: f64) -> ManeuverCommand {
        for span in &self.spans {
            if s >= span.from_s && s < span.to_s {
                return span.command;
            }
        }
        ManeuverCommand::Follow
    }

    /// Project a world point onto the route: returns `(s, lateral)` where
    /// `s` is the arc length of the closest route point and `lateral` is the
    /// signed offset (positive left of the route direction).
    pub fn project(&self, x: f64, y: f64) -> (f64, f64) {
        let mut best_s = 0.0;
        let mut best_d2 = f64::INFINITY;
        let mut best_lateral = 0.0;
        for i in 0..self.points.len() - 1 {
            let a = self.points[i];
            let b = self.points[i + 1];
            let abx = b[0] - a[0];
            let aby = b[1] - a[1];
            let len2 = abx * abx + aby * aby;
            let t = (((x - a[0]) * abx + (y - a[1]) * aby) / len2).clamp(0.0, 1.0);
            let px = a[0] + abx * t;
            let py = a[1] + aby * t;
            let d2 = (x - px).powi(2) + (y - py).powi(2);
            if d2 < best_d2 {
                best_d2 = d2;
                best_s = self.cumulative_s[i] + t * len2.sqrt();
                // Signed lateral: positive when the point lies left of the
                // segment direction.
                let cross = abx * (y - a[1]) - aby * (x - a[0]);
                best_lateral = cross.signum() * d2.sqrt();
                if d2 == 0.0 {
                    best_lateral = 0.0;
                }
            }
        }
        (best_s, best_lateral)
    }

    /// Completion fraction for an ego position (projected arc length over
    /// total length), in `[0, 1]`.
    pub fn completion(&self, x: f64, y: f64) -> f64 {
        let (s, _) = self.project(x, y);
        (s / self.total_length()).clamp(0.0, 1.0)
    }

    /// Goal waypoint `lookahead` meters down the route from the ego's
    /// projection, in the ego frame, with the command active at the goal.
    ///
    /// The goal clamps to the route end near the end of the route. Returns
    /// an error when the ego is farther than [`OFF_ROUTE_TOLERANCE_M`] from
    /// the route.
    pub fn next_goal_waypoint(&self, ego: &EgoState, lookahead: f64) -> Result<GoalWaypoint> {
        let (s, lateral) = self.project(ego.current.x, ego.current.y);
        if lateral.abs() > OFF_ROUTE_TOLERANCE_M {
            return Err(SimError::OffRoute { lateral_m: lateral.abs() });
        }
        let goal_s = (s + lookahead).min(self.total_length());
        let [gx, gy] = self.position_at(goal_s);
        let (x, y) = ego.world_to_ego(gx, gy);
        Ok(GoalWaypoint { x, y, command: self.command_at(goal_s) })
    }
}
