//! World state: static map geometry, scripted agents, traffic controls, and
//! the per-tick update that advances all of them deterministically.

use serde::{Deserialize, Serialize};

use crate::dynamics::{step_dynamics, VehicleParams};
use crate::route::RoutePlan;
use crate::types::{wrap_angle, EgoState, VehicleControls};

/// Width of a single lane, meters.
pub const LANE_WIDTH_M: f64 = 3.5;

/// Simulation tick, seconds (10 Hz).
pub const SIM_DT_S: f64 = 0.1;

/// Category of a scripted agent, also the intensity class used by the
/// rasterizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentKind {
    Vehicle,
    Pedestrian,
    Obstacle,
}

/// Scripted motion for a background agent. All scripts are deterministic
/// functions of `(time, ego pose)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum BehaviorScript {
    /// Never moves (parked car, cone, debris).
    Static,
    /// Moves along its heading at a constant speed.
    Cruise { speed: f64 },
    /// Holds still until the ego is within `trigger_range`, then moves along
    /// its heading at `speed`.
    TriggeredCross { trigger_range: f64, speed: f64 },
    /// Cruises at `pre_speed`; once the ego is within `trigger_range`,
    /// switches to `post_speed` and shifts laterally (positive = agent's
    /// left) until `target_offset` is consumed.
    TriggeredLaneShift {
        trigger_range: f64,
        pre_speed: f64,
        post_speed: f64,
        lateral_rate: f64,
        target_offset: f64,
    },
    /// Cruises at `cruise_speed`; once the ego is within `trigger_range`,
    /// decelerates at `decel` until stationary, holds for `hold_s` seconds,
    /// then ramps back up to `cruise_speed`.
    TriggeredBrake { trigger_range: f64, cruise_speed: f64, decel: f64, hold_s: f64 },
}

/// A scripted background agent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Agent {
    pub id: u32,
    pub kind: AgentKind,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub length: f64,
    pub width: f64,
    /// Emergency vehicle flag (sirens on): affects annotation and yielding.
    pub is_emergency: bool,
    pub behavior: BehaviorScript,
    /// Lateral shift already consumed by `TriggeredLaneShift`, meters.
    shift_progress: f64,
    /// Seconds spent stationary by `TriggeredBrake` after stopping.
    hold_elapsed: f64,
    /// Latched once a triggered behavior has fired.
    triggered: bool,
}

impl Agent {
    pub fn new(
        id: u32,
        kind: AgentKind,
        x: f64,
        y: f64,
        heading: f64,
        behavior: BehaviorScript,
    ) -> Self {
        let (length, width) = match kind {
            AgentKind::Vehicle => (4.5, 2.0),
            AgentKind::Pedestrian => (0.6, 0.6),
            AgentKind::Obstacle => (1.5, 1.5),
        };
        let speed = match &behavior {
            BehaviorScript::Cruise { speed } => *speed,
            BehaviorScript::TriggeredLaneShift { pre_speed, .. } => *pre_speed,
            BehaviorScript::TriggeredBrake { cruise_speed, .. } => *cruise_speed,
            _ => 0.0,
        };
        Self {
            id,
            kind,
            x,
            y,
            heading,
            speed,
            length,
            width,
            is_emergency: false,
            behavior,
            shift_progress: 0.0,
            hold_elapsed: 0.0,
            triggered: false,
        }
    }

    /// Whether a scripted lane shift is currently in progress.
    pub fn is_shifting(&self) -> bool {
        match &self.behavior {
            BehaviorScript::TriggeredLaneShift { target_offset, .. } => {
                self.triggered && self.shift_progress < target_offset.abs()
            }
            _ => false,
        }
    }

    pub fn emergency(mut self) -> Self {
        self.is_emergency = true;
        self
    }

    pub fn with_speed(mut self, speed: f64) -> Self {
        self.speed = speed;
        self
    }

    fn distance_to(&self, ex: f64, ey: f64) -> f64 {
        ((self.x - ex).powi(2) + (self.y - ey).powi(2)).sqrt()
    }

    /// Advance the agent by one tick given the current ego pose.
    fn step(&mut self, ego_x: f64, ego_y: f64, dt: f64) {
        match self.behavior.clone() {
            BehaviorScript::Static => {}
            BehaviorScript::Cruise { speed } => {
                self.speed = speed;
                self.x += speed * self.heading.cos() * dt;
                self.y += speed * self.heading.sin() * dt;
            }
            BehaviorScript::TriggeredCross { trigger_range, speed } => {
                if !self.triggered && self.distance_to(ego_x, ego_y) <= trigger_range {
                    self.triggered = true;
                }
                if self.triggered {
                    self.speed = speed;
                    self.x += speed * self.heading.cos() * dt;
                    self.y += speed * self.heading.sin() * dt;
                } else {
                    self.speed = 0.0;
                }
            }
            BehaviorScript::TriggeredLaneShift {
                trigger_range,
                pre_speed,
                post_speed,
                lateral_rate,
                target_offset,
            } => {
                if !self.triggered && self.distance_to(ego_x, ego_y) <= trigger_range {
                    self.triggered = true;
                }
                let speed = if self.triggered { post_speed } else { pre_speed };
                self.speed = speed;
                self.x += speed * self.heading.cos() * dt;
                self.y += speed * self.heading.sin() * dt;
                if self.triggered && self.shift_progress < target_offset.abs() {
                    let step = (lateral_rate * dt).min(target_offset.abs() - self.shift_progress);
                    // Positive target shifts toward the agent's left.
                    let left = wrap_angle(self.heading + std::f64::consts::FRAC_PI_2);
                    let sign = target_offset.signum();
                    self.x += sign * step * left.cos();
                    self.y += sign * step * left.sin();
                    self.shift_progress += step;
                }
            }
            BehaviorScript::TriggeredBrake { trigger_range, cruise_speed, decel, hold_s } => {
                if !self.triggered && self.distance_to(ego_x, ego_y) <= trigger_range {
                    self.triggered = true;
                }
                self.speed = if !self.triggered {
                    cruise_speed
                } else if self.hold_elapsed >= hold_s {
                    // Resume after the hold, ramping back up.
                    (self.speed + 2.5 * dt).min(cruise_speed)
                } else {
                    let v = (self.speed - decel * dt).max(0.0);
                    if v == 0.0 {
                        self.hold_elapsed += dt;
                    }
                    v
                };
                self.x += self.speed * self.heading.cos() * dt;
                self.y += self.speed * self.heading.sin() * dt;
            }
        }
    }

    pub fn snapshot(&self) -> AgentSnapshot {
        AgentSnapshot {
            kind: self.kind,
            x: self.x,
            y: self.y,
            heading: self.heading,
            speed: self.speed,
            length: self.length,
            width: self.width,
            is_emergency: self.is_emergency,
        }
    }
}

/// Immutable view of an agent at one tick; what the sensor pipeline and the
/// dataset store.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub kind: AgentKind,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub length: f64,
    pub width: f64,
    pub is_emergency: bool,
}

/// Straight road segment. The centerline runs `start -> end`; lanes for
/// travel in that direction sit to the right of the centerline (negative
/// signed lateral offset), opposing lanes to the left.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RoadSegment {
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub lanes_forward: u32,
    pub lanes_backward: u32,
}

impl RoadSegment {
    pub fn heading(&self) -> f64 {
        (self.end[1] - self.start[1]).atan2(self.end[0] - self.start[0])
    }

    pub fn length(&self) -> f64 {
        ((self.end[0] - self.start[0]).powi(2) + (self.end[1] - self.start[1]).powi(2)).sqrt()
    }

    /// Project a point: returns `(s, lateral)` with `s` clamped to the
    /// segment and lateral positive to the left of `start -> end`.
    pub fn project(&self, x: f64, y: f64) -> (f64, f64) {
        let dx = self.end[0] - self.start[0];
        let dy = self.end[1] - self.start[1];
        let len = self.length();
        let (ux, uy) = (dx / len, dy / len);
        let rx = x - self.start[0];
        let ry = y - self.start[1];
        let s = (rx * ux + ry * uy).clamp(0.0, len);
        let lateral = ux * ry - uy * rx;
        (s, lateral)
    }

    /// Whether the point lies on the paved band of this segment.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = self.end[0] - self.start[0];
        let dy = self.end[1] - self.start[1];
        let len = self.length();
        let (ux, uy) = (dx / len, dy / len);
        let rx = x - self.start[0];
        let ry = y - self.start[1];
        let s = rx * ux + ry * uy;
        if s < 0.0 || s > len {
            return false;
        }
        let lateral = ux * ry - uy * rx;
        let left = self.lanes_backward as f64 * LANE_WIDTH_M;
        let right = self.lanes_forward as f64 * LANE_WIDTH_M;
        lateral <= left && lateral >= -right
    }
}

/// Axis-aligned junction box: intersecting roads overlap here and lane-side
/// rules are suspended inside it.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct JunctionBox {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl JunctionBox {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }
}

/// Traffic-light phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LightPhase {
    Red,
    Yellow,
    Green,
}

/// A traffic light with a fixed-cycle schedule and a stop line expressed as
/// an arc-length position on the ego route.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrafficLight {
    /// World position of the signal head (for rasterization).
    pub x: f64,
    pub y: f64,
    /// Arc length along the route at which the ego must stop when red.
    pub stop_line_s: f64,
    pub green_s: f64,
    pub yellow_s: f64,
    pub red_s: f64,
    /// Schedule offset, seconds; phase order within a cycle is
    /// green -> yellow -> red.
    pub offset_s: f64,
}

impl TrafficLight {
    pub fn phase_at(&self, time: f64) -> LightPhase {
        let cycle = self.green_s + self.yellow_s + self.red_s;
        let t = (time + self.offset_s).rem_euclid(cycle);
        if t < self.green_s {
            LightPhase::Green
        } else if t < self.green_s + self.yellow_s {
            LightPhase::Yellow
        } else {
            LightPhase::Red
        }
    }
}

/// A stop sign with its stop line as an arc-length position on the route.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StopSign {
    pub x: f64,
    pub y: f64,
    pub stop_line_s: f64,
}

/// Static map: everything that does not move during an episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StaticMap {
    pub roads: Vec<RoadSegment>,
    pub junctions: Vec<JunctionBox>,
    pub lights: Vec<TrafficLight>,
    pub stop_signs: Vec<StopSign>,
    /// Posted limit, m/s; also the floor for traffic speed in efficiency
    /// scoring.
    pub speed_limit: f64,
}

/// Where a pose sits relative to the lane layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaneOccupancy {
    OwnLane,
    OpposingLane,
    OffRoad,
}

impl StaticMap {
    /// Whether a point is on any paved surface (road band or junction box).
    pub fn is_drivable(&self, x: f64, y: f64) -> bool {
        self.junctions.iter().any(|j| j.contains(x, y))
            || self.roads.iter().any(|r| r.contains(x, y))
    }

    /// Classify a pose against lane direction. Junction interiors always
    /// count as the pose's own lane; otherwise the nearest containing road
    /// decides using the sign of the lateral offset versus travel direction.
    pub fn lane_occupancy(&self, x: f64, y: f64, heading: f64) -> LaneOccupancy {
        if self.junctions.iter().any(|j| j.contains(x, y)) {
            return LaneOccupancy::OwnLane;
        }
        let mut best: Option<(f64, &RoadSegment)> = None;
        for road in &self.roads {
            if road.contains(x, y) {
                let (_, lateral) = road.project(x, y);
                if best.map_or(true, |(l, _)| lateral.abs() < l) {
                    best = Some((lateral.abs(), road));
                }
            }
        }
        let Some((_, road)) = best else {
            return LaneOccupancy::OffRoad;
        };
        let (_, lateral) = road.project(x, y);
        let along = wrap_angle(heading - road.heading()).cos() >= 0.0;
        // Traveling with the segment: own lanes are at lateral <= 0.
        // Traveling against it: own lanes are at lateral >= 0.
        let opposing = if along {
            lateral > 0.05 && road.lanes_backward > 0
        } else {
            lateral < -0.05 && road.lanes_forward > 0
        };
        if opposing {
            LaneOccupancy::OpposingLane
        } else {
            LaneOccupancy::OwnLane
        }
    }
}

/// Complete mutable world: ego, agents, map, route, and clock.
#[derive(Debug, Clone)]
pub struct WorldState {
    pub time: f64,
    pub ego: EgoState,
    pub agents: Vec<Agent>,
    pub map: StaticMap,
    pub route: RoutePlan,
    pub vehicle: VehicleParams,
}

impl WorldState {
    pub fn new(ego: EgoState, agents: Vec<Agent>, map: StaticMap, route: RoutePlan) -> Self {
        Self { time: 0.0, ego, agents, map, route, vehicle: VehicleParams::default() }
    }

    /// Advance the world by one tick under the given ego controls.
    pub fn step(&mut self, controls: VehicleControls, dt: f64) {
        let next = step_dynamics(&self.ego.current, &controls, &self.vehicle, dt);
        self.ego.advance(next);
        let (ex, ey) = (self.ego.current.x, self.ego.current.y);
        for agent in &mut self.agents {
            agent.step(ex, ey, dt);
        }
        self.time += dt;
    }

    /// Snapshots of all agents at the current tick.
    pub fn agent_snapshots(&self) -> Vec<AgentSnapshot> {
        self.agents.iter().map(Agent::snapshot).collect()
    }

    /// Phase of the first light whose stop line is still ahead of `s`, if
    /// any; used to paint the signal channel and emit dataset context.
    pub fn governing_light(&self, s: f64) -> Option<(&TrafficLight, LightPhase)> {
        self.map
            .lights
            .iter()
            .filter(|l| l.stop_line_s >= s - 1.0)
            .min_by(|a, b| a.stop_line_s.partial_cmp(&b.stop_line_s).unwrap())
            .map(|l| (l, l.phase_at(self.time)))
    }

    /// Mean speed of vehicle agents within `radius` of the ego, if any.
    pub fn nearby_traffic_mean_speed(&self, radius: f64) -> Option<f64> {
        let (ex, ey) = (self.ego.current.x, self.ego.current.y);
        let speeds: Vec<f64> = self
            .agents
            .iter()
            .filter(|a| a.kind == AgentKind::Vehicle)
            .filter(|a| ((a.x - ex).powi(2) + (a.y - ey).powi(2)).sqrt() <= radius)
            .map(|a| a.speed)
            .collect();
        if speeds.is_empty() {
            None
        } else {
            Some(speeds.iter().sum::<f64>() / speeds.len() as f64)
        }
    }
}
