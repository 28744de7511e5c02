//! Traffic-rule monitoring: collision, red-light, stop-sign, wrong-lane,
//! off-route, and timeout detection, each reported once per trigger.

use serde::{Deserialize, Serialize};

use crate::route::OFF_ROUTE_TOLERANCE_M;
use crate::world::{LaneOccupancy, LightPhase, WorldState};

/// Seconds the ego may occupy an opposing lane before it counts as an
/// infraction (brief crossings during overtakes are tolerated).
pub const WRONG_LANE_GRACE_S: f64 = 2.0;

/// Speed below which the ego counts as having stopped, m/s.
pub const STOP_SPEED_THRESHOLD: f64 = 0.5;

/// Length of the approach window before a stop line in which the ego must
/// come to a stop, meters.
pub const STOP_WINDOW_M: f64 = 10.0;

/// Kinds of rule violations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfractionKind {
    Collision,
    RedLight,
    StopSign,
    OffRoute,
    RouteTimeout,
    WrongLane,
}

impl InfractionKind {
    /// Multiplicative score penalty. Terminating events that already cap
    /// route completion carry no extra multiplier.
    pub fn penalty_factor(self) -> f64 {
        match self {
            InfractionKind::Collision => 0.50,
            InfractionKind::RedLight => 0.70,
            InfractionKind::StopSign => 0.80,
            InfractionKind::WrongLane => 0.90,
            InfractionKind::OffRoute | InfractionKind::RouteTimeout => 1.0,
        }
    }

    /// Whether this infraction ends the episode.
    pub fn terminates(self) -> bool {
        matches!(
            self,
            InfractionKind::Collision | InfractionKind::OffRoute | InfractionKind::RouteTimeout
        )
    }
}

/// One recorded violation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Infraction {
    pub kind: InfractionKind,
    pub time: f64,
    pub penalty_factor: f64,
}

impl Infraction {
    fn at(kind: InfractionKind, time: f64) -> Self {
        Self { kind, time, penalty_factor: kind.penalty_factor() }
    }
}

/// Corners of an oriented rectangle.
fn obb_corners(cx: f64, cy: f64, heading: f64, length: f64, width: f64) -> [[f64; 2]; 4] {
    let (c, s) = (heading.cos(), heading.sin());
    let hl = length / 2.0;
    let hw = width / 2.0;
    let mut out = [[0.0; 2]; 4];
    for (i, (lx, ly)) in [(hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw)].iter().enumerate() {
        out[i] = [cx + c * lx - s * ly, cy + s * lx + c * ly];
    }
    out
}

/// Separating-axis overlap test for two oriented rectangles.
pub fn obb_intersects(a: &[[f64; 2]; 4], b: &[[f64; 2]; 4]) -> bool {
    // Candidate axes: the two edge normals of each rectangle.
    let axes = [
        [a[1][0] - a[0][0], a[1][1] - a[0][1]],
        [a[3][0] - a[0][0], a[3][1] - a[0][1]],
        [b[1][0] - b[0][0], b[1][1] - b[0][1]],
        [b[3][0] - b[0][0], b[3][1] - b[0][1]],
    ];
    for axis in axes {
        let norm = (axis[0] * axis[0] + axis[1] * axis[1]).sqrt();
        if norm < 1e-12 {
            continue;
        }
        let project = |pts: &[[f64; 2]; 4]| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for p in pts {
                let v = (p[0] * axis[0] + p[1] * axis[1]) / norm;
                lo = lo.min(v);
                hi = hi.max(v);
            }
            (lo, hi)
        };
        let (alo, ahi) = project(a);
        let (blo, bhi) = project(b);
        if ahi < blo || bhi < alo {
            return false; // found a separating axis
        }
    }
    true
}

/// Stateful detector fed once per tick; latches ensure each trigger reports
/// a single infraction.
#[derive(Debug, Clone)]
pub struct InfractionTracker {
    prev_route_s: f64,
    /// Whether the corresponding light's stop line has been crossed.
    light_crossed: Vec<bool>,
    sign_crossed: Vec<bool>,
    /// Minimum ego speed observed inside each sign's approach window.
    sign_window_min_speed: Vec<f64>,
    wrong_lane_since: Option<f64>,
    wrong_lane_reported: bool,
    off_route_reported: bool,
    timeout_reported: bool,
    collision_reported: bool,
    /// Scenario-level permission to use the opposing lane (two-way
    /// overtaking routes).
    allows_opposing: bool,
    time_budget_s: f64,
    terminal: bool,
}

impl InfractionTracker {
    pub fn new(world: &WorldState, allows_opposing: bool, time_budget_s: f64) -> Self {
        let (s, _) = world.route.project(world.ego.current.x, world.ego.current.y);
        Self {
            prev_route_s: s,
            light_crossed: vec![false; world.map.lights.len()],
            sign_crossed: vec![false; world.map.stop_signs.len()],
            sign_window_min_speed: vec![f64::INFINITY; world.map.stop_signs.len()],
            wrong_lane_since: None,
            wrong_lane_reported: false,
            off_route_reported: false,
            timeout_reported: false,
            collision_reported: false,
            allows_opposing,
            time_budget_s,
            terminal: false,
        }
    }

    /// Whether a terminating infraction has been observed.
    pub fn terminal(&self) -> bool {
        self.terminal
    }

    /// Inspect the world after a step and report any newly triggered
    /// infractions.
    pub fn observe(&mut self, world: &WorldState) -> Vec<Infraction> {
        let mut found = Vec::new();
        let ego = &world.ego.current;
        let time = world.time;
        let (s, lateral) = world.route.project(ego.x, ego.y);

        // Collision: ego footprint against every agent footprint. The pose
        // tracks the rear axle, so the body center sits half a wheelbase
        // ahead of it.
        if !self.collision_reported {
            let fwd = world.vehicle.wheelbase / 2.0;
            let ego_box = obb_corners(
                ego.x + fwd * ego.heading.cos(),
                ego.y + fwd * ego.heading.sin(),
                ego.heading,
                world.vehicle.length,
                world.vehicle.width,
            );
            for agent in &world.agents {
                let other =
                    obb_corners(agent.x, agent.y, agent.heading, agent.length, agent.width);
                if obb_intersects(&ego_box, &other) {
                    found.push(Infraction::at(InfractionKind::Collision, time));
                    self.collision_reported = true;
                    self.terminal = true;
                    break;
                }
            }
        }

        // Red light: crossing a stop line while the phase is red.
        for (i, light) in world.map.lights.iter().enumerate() {
            if !self.light_crossed[i]
                && self.prev_route_s < light.stop_line_s
                && s >= light.stop_line_s
            {
                self.light_crossed[i] = true;
                if light.phase_at(time) == LightPhase::Red {
                    found.push(Infraction::at(InfractionKind::RedLight, time));
                }
            }
        }

        // Stop sign: must dip below the stop threshold somewhere in the
        // approach window before crossing the line.
        for (i, sign) in world.map.stop_signs.iter().enumerate() {
            if self.sign_crossed[i] {
                continue;
            }
            if s >= sign.stop_line_s - STOP_WINDOW_M && s < sign.stop_line_s {
                self.sign_window_min_speed[i] = self.sign_window_min_speed[i].min(ego.speed);
            }
            if self.prev_route_s < sign.stop_line_s && s >= sign.stop_line_s {
                self.sign_crossed[i] = true;
                if self.sign_window_min_speed[i] > STOP_SPEED_THRESHOLD {
                    found.push(Infraction::at(InfractionKind::StopSign, time));
                }
            }
        }

        // Wrong lane: sustained occupancy of an opposing lane.
        if !self.allows_opposing {
            match world.map.lane_occupancy(ego.x, ego.y, ego.heading) {
                LaneOccupancy::OpposingLane => {
                    let since = *self.wrong_lane_since.get_or_insert(time);
                    if !self.wrong_lane_reported && time - since > WRONG_LANE_GRACE_S {
                        found.push(Infraction::at(InfractionKind::WrongLane, time));
                        self.wrong_lane_reported = true;
                    }
                }
                _ => {
                    self.wrong_lane_since = None;
                    self.wrong_lane_reported = false;
                }
            }
        }

        // Off route: beyond the lateral corridor.
        if !self.off_route_reported && lateral.abs() > OFF_ROUTE_TOLERANCE_M {
            found.push(Infraction::at(InfractionKind::OffRoute, time));
            self.off_route_reported = true;
            self.terminal = true;
        }

        // Timeout.
        if !self.timeout_reported && time > self.time_budget_s {
            found.push(Infraction::at(InfractionKind::RouteTimeout, time));
            self.timeout_reported = true;
            self.terminal = true;
        }

        self.prev_route_s = s;
        found
    }
}
