//! Privileged rule-based driver: reads ground-truth world state to produce
//! demonstration trajectories, the controls that track them, and the
//! per-frame situation context the annotators consume.

use crate::annotate::{FrameContext, LaneSide};
use crate::control::{compute_controls, ControlState};
use crate::error::{Result, SimError};
use crate::infraction::{Infraction, InfractionTracker};
use crate::route::GOAL_LOOKAHEAD_M;
use crate::scenario::{spawn_scenario, ScenarioSpec};
use crate::types::{
    EgoRecord, GoalWaypoint, ManeuverCommand, Trajectory, VehicleControls, EGO_HISTORY_LEN,
    TRAJECTORY_LEN, WAYPOINT_SPACING_S,
};
use crate::world::{AgentKind, AgentSnapshot, BehaviorScript, LightPhase, WorldState, SIM_DT_S};

/// Cruise target as a fraction of the posted limit.
const CRUISE_FRACTION: f64 = 0.85;

/// Speed cap while crossing or about to enter a junction, m/s.
const JUNCTION_SPEED_CAP: f64 = 3.5;

/// Yield speed while an emergency vehicle closes from behind, m/s.
const EMERGENCY_YIELD_SPEED: f64 = 2.5;

/// Speed held while the cross-track error to the route is still large, m/s.
const RECOVERY_SPEED: f64 = 3.5;

/// Half-width of the planned-path corridor for vehicles/obstacles, meters.
const CORRIDOR_MARGIN_M: f64 = 1.6;

/// Wider corridor used for pedestrians, meters.
const PEDESTRIAN_MARGIN_M: f64 = 3.4;

/// The privileged driver's persistent state across an episode.
#[derive(Debug, Clone)]
pub struct ExpertDriver {
    control: ControlState,
    served_signs: Vec<bool>,
}

impl ExpertDriver {
    pub fn new(world: &WorldState) -> Self {
        Self {
            control: ControlState::default(),
            served_signs: vec![false; world.map.stop_signs.len()],
        }
    }

    /// Ground-truth situation summary for the current tick.
    pub fn context(&self, world: &WorldState) -> FrameContext {
        let ego = &world.ego;
        let route = &world.route;
        let (s, _) = route.project(ego.current.x, ego.current.y);
        let goal_s = (s + GOAL_LOOKAHEAD_M).min(route.total_length());
        let command = route.command_at(goal_s);
        let is_in_junction =
            world.map.junctions.iter().any(|j| j.contains(ego.current.x, ego.current.y));

        // Nearest agent physically ahead in the ego's own travel corridor.
        let mut obstacle_ahead_m: Option<f64> = None;
        for agent in &world.agents {
            let (ax, ay) = ego.world_to_ego(agent.x, agent.y);
            if ax > 0.5 && ax <= 40.0 && ay.abs() <= 2.0 {
                obstacle_ahead_m =
                    Some(obstacle_ahead_m.map_or(ax, |d: f64| d.min(ax)));
            }
        }

        // Lane-change intent: an explicit command, or a route that displaces
        // laterally ahead (an obstacle swerve). Junction turns are not lane
        // changes.
        let turning = matches!(command, ManeuverCommand::TurnLeft | ManeuverCommand::TurnRight);
        let probe_s = (s + 18.0).min(route.total_length());
        let mut target_lane_side = match command {
            ManeuverCommand::ChangeLeft => Some(LaneSide::Left),
            ManeuverCommand::ChangeRight => Some(LaneSide::Right),
            _ => None,
        };
        if target_lane_side.is_none() && !turning && !is_in_junction {
            let p0 = route.position_at(s);
            let t0 = route.tangent_at(s);
            let p1 = route.position_at(probe_s);
            let lateral_disp = t0[0] * (p1[1] - p0[1]) - t0[1] * (p1[0] - p0[0]);
            if lateral_disp.abs() > 2.2 {
                target_lane_side =
                    Some(if lateral_disp > 0.0 { LaneSide::Left } else { LaneSide::Right });
            }
        }
        let target_lane_opposing = target_lane_side.is_some() && {
            let p1 = route.position_at(probe_s);
            let t1 = route.tangent_at(probe_s);
            world.map.lane_occupancy(p1[0], p1[1], t1[1].atan2(t1[0]))
                == crate::world::LaneOccupancy::OpposingLane
        };

        // A vehicle drifting laterally toward the ego's lane from a side.
        let mut merging_side: Option<LaneSide> = None;
        let mut best_merge_x = f64::INFINITY;
        for agent in &world.agents {
            let Some(lateral_rate) = agent_lateral_rate(agent) else { continue };
            let (ax, ay) = ego.world_to_ego(agent.x, agent.y);
            if !(ax > 0.0 && ax <= 30.0 && ay.abs() > 1.0 && ay.abs() <= 6.0) {
                continue;
            }
            // World-frame lateral velocity (perpendicular-left of heading).
            let left = agent.heading + std::f64::consts::FRAC_PI_2;
            let (vx, vy) = (lateral_rate * left.cos(), lateral_rate * left.sin());
            // Into the ego frame (rotation only).
            let (c, sn) = (ego.current.heading.cos(), ego.current.heading.sin());
            let v_y_ego = -sn * vx + c * vy;
            if v_y_ego.abs() > 0.3 && v_y_ego.signum() != ay.signum() && ax < best_merge_x {
                best_merge_x = ax;
                merging_side = Some(if ay > 0.0 { LaneSide::Left } else { LaneSide::Right });
            }
        }

        // Closest active emergency vehicle within sensing range.
        let mut emergency_vehicle_bearing = None;
        let mut best_emergency = f64::INFINITY;
        for agent in &world.agents {
            if !agent.is_emergency {
                continue;
            }
            let (ax, ay) = ego.world_to_ego(agent.x, agent.y);
            let dist = (ax * ax + ay * ay).sqrt();
            if dist <= 45.0 && dist < best_emergency {
                best_emergency = dist;
                emergency_vehicle_bearing =
                    Some(crate::types::CameraViewId::containing(ay.atan2(ax)));
            }
        }

        FrameContext {
            is_in_junction,
            command,
            obstacle_ahead_m,
            target_lane_side,
            target_lane_opposing,
            merging_side,
            emergency_vehicle_bearing,
        }
    }

    /// Target speed after applying every driving rule; also advances the
    /// stop-sign service latches.
    fn target_speed(&mut self, world: &WorldState) -> f64 {
        let ego = &world.ego.current;
        let route = &world.route;
        let (s, cross_track) = route.project(ego.x, ego.y);
        let mut v = CRUISE_FRACTION * world.map.speed_limit;

        // While far off the route line (turn exits, recovery), keep the
        // speed down until converged; accelerating mid-correction makes the
        // tracking controller overshoot across lane lines.
        if cross_track.abs() > 0.5 {
            v = v.min(RECOVERY_SPEED);
        }

        // Slow down in and just before junctions.
        let ego_in_junction = world.map.junctions.iter().any(|j| j.contains(ego.x, ego.y));
        let near_junction = ego_in_junction
            || (0..=4).any(|k| {
                let p = route.position_at(s + 3.0 * k as f64);
                world.map.junctions.iter().any(|j| j.contains(p[0], p[1]))
            });
        if near_junction {
            v = v.min(JUNCTION_SPEED_CAP);
        }

        // Gap acceptance: before entering a junction, hold at its edge while
        // any moving vehicle occupies it or is bearing down on it. Once
        // inside, the ego is committed and keeps moving.
        if !ego_in_junction {
            let entry_s = (0..=30).map(|k| s + k as f64).find(|&sk| {
                let p = route.position_at(sk);
                world.map.junctions.iter().any(|j| j.contains(p[0], p[1]))
            });
            if let Some(entry_s) = entry_s {
                let conflict = world.agents.iter().any(|a| {
                    if a.kind != AgentKind::Vehicle || a.speed <= 0.5 {
                        return false;
                    }
                    world.map.junctions.iter().any(|j| {
                        if j.contains(a.x, a.y) {
                            return true;
                        }
                        let cx = a.x.clamp(j.min[0], j.max[0]);
                        let cy = a.y.clamp(j.min[1], j.max[1]);
                        let dist = ((a.x - cx).powi(2) + (a.y - cy).powi(2)).sqrt();
                        let approaching = (cx - a.x) * a.heading.cos()
                            + (cy - a.y) * a.heading.sin()
                            > 0.0;
                        dist < 14.0 && approaching
                    })
                });
                if conflict {
                    v = v.min((0.5 * (entry_s - s - 3.0)).max(0.0));
                }
            }
        }

        // Agents on the planned path.
        for agent in &world.agents {
            let (sa, lat) = route.project(agent.x, agent.y);
            let d = sa - s;
            if d <= 0.3 || d > 40.0 {
                continue;
            }
            match agent.kind {
                AgentKind::Pedestrian => {
                    if lat.abs() < PEDESTRIAN_MARGIN_M && d <= 25.0 {
                        v = v.min((0.35 * (d - 10.0)).max(0.0));
                    }
                }
                AgentKind::Vehicle | AgentKind::Obstacle => {
                    if lat.abs() < CORRIDOR_MARGIN_M {
                        let t = route.tangent_at(sa);
                        let along =
                            agent.speed * (agent.heading - t[1].atan2(t[0])).cos();
                        v = v.min((0.5 * (d - 7.0)).max(0.0) + 0.8 * along.max(0.0));
                    }
                }
            }
        }

        // Traffic lights governing a stop line ahead.
        for light in &world.map.lights {
            let dist = light.stop_line_s - s;
            if !(-0.5..=30.0).contains(&dist) {
                continue;
            }
            let phase = light.phase_at(world.time);
            let must_stop = match phase {
                LightPhase::Red => true,
                LightPhase::Yellow => dist >= 8.0,
                LightPhase::Green => false,
            };
            if must_stop {
                v = v.min((0.5 * (dist - 2.5)).max(0.0));
            }
        }

        // Stop signs: halt once, then proceed.
        for (i, sign) in world.map.stop_signs.iter().enumerate() {
            let dist = sign.stop_line_s - s;
            if !(-0.5..=30.0).contains(&dist) || self.served_signs[i] {
                continue;
            }
            v = v.min((0.5 * (dist - 2.5)).max(0.0));
            if dist < 8.0 && ego.speed < 0.3 {
                self.served_signs[i] = true;
            }
        }

        // Yield while an emergency vehicle closes from behind.
        for agent in &world.agents {
            if !agent.is_emergency {
                continue;
            }
            let (ax, _) = world.ego.world_to_ego(agent.x, agent.y);
            if (-35.0..=5.0).contains(&ax) {
                v = v.min(EMERGENCY_YIELD_SPEED);
            }
        }
        v
    }

    /// Oracle trajectory: waypoints walked down the route at the current
    /// target speed, expressed in the ego frame.
    pub fn plan(&mut self, world: &WorldState) -> Trajectory {
        let v = self.target_speed(world);
        let route = &world.route;
        let (s, _) = route.project(world.ego.current.x, world.ego.current.y);
        let mut traj = Trajectory::zeros();
        for k in 0..TRAJECTORY_LEN {
            let sk = (s + v * WAYPOINT_SPACING_S * (k + 1) as f64).min(route.total_length());
            let p = route.position_at(sk);
            let (x, y) = world.ego.world_to_ego(p[0], p[1]);
            traj.waypoints[k] = [x, y];
        }
        traj
    }

    /// One decision tick: plan a trajectory and track it with the PID
    /// controller.
    pub fn decide(&mut self, world: &WorldState) -> (Trajectory, VehicleControls) {
        let traj = self.plan(world);
        let controls = compute_controls(world.ego.current.speed, &traj, &mut self.control, SIM_DT_S);
        (traj, controls)
    }
}

/// Signed lateral speed of a scripted lane shift in progress, if any
/// (positive toward the agent's left).
fn agent_lateral_rate(agent: &crate::world::Agent) -> Option<f64> {
    match &agent.behavior {
        BehaviorScript::TriggeredLaneShift { lateral_rate, target_offset, .. } => {
            if agent.is_shifting() {
                Some(lateral_rate * target_offset.signum())
            } else {
                None
            }
        }
        _ => None,
    }
}

/// Everything recorded about one simulation tick during a rollout.
#[derive(Debug, Clone)]
pub struct TickRecord {
    pub time: f64,
    pub ego: EgoRecord,
    pub history: [EgoRecord; EGO_HISTORY_LEN],
    pub controls: VehicleControls,
    pub goal: GoalWaypoint,
    pub context: FrameContext,
    pub agents: Vec<AgentSnapshot>,
}

/// A complete expert demonstration episode.
#[derive(Debug, Clone)]
pub struct EpisodeRollout {
    pub ticks: Vec<TickRecord>,
    pub infractions: Vec<Infraction>,
    pub completion: f64,
    pub success: bool,
    pub duration_s: f64,
}

/// Fraction of the route that counts as finished.
pub const COMPLETION_DONE: f64 = 0.995;

/// Run the privileged driver through a scenario and record every tick.
pub fn run_expert_episode(spec: &ScenarioSpec) -> Result<EpisodeRollout> {
    let mut world = spawn_scenario(spec);
    let route = world.route.clone();
    let mut driver = ExpertDriver::new(&world);
    let mut tracker = InfractionTracker::new(&world, spec.allows_opposing_lane, spec.time_budget_s);
    let mut ticks = Vec::new();
    let mut infractions = Vec::new();

    let max_ticks = ((spec.time_budget_s + 5.0) / SIM_DT_S) as usize;
    for _ in 0..max_ticks {
        let goal = match route.next_goal_waypoint(&world.ego, GOAL_LOOKAHEAD_M) {
            Ok(g) => g,
            Err(SimError::OffRoute { .. }) => break, // tracker reports it below
            Err(e) => return Err(e),
        };
        let context = driver.context(&world);
        let (_, controls) = driver.decide(&world);
        ticks.push(TickRecord {
            time: world.time,
            ego: world.ego.current,
            history: world.ego.history,
            controls,
            goal,
            context,
            agents: world.agent_snapshots(),
        });
        world.step(controls, SIM_DT_S);
        infractions.extend(tracker.observe(&world));
        if tracker.terminal() {
            break;
        }
        if route.completion(world.ego.current.x, world.ego.current.y) >= COMPLETION_DONE {
            break;
        }
    }

    let completion = route.completion(world.ego.current.x, world.ego.current.y);
    let success = completion >= COMPLETION_DONE
        && infractions.is_empty()
        && world.time <= spec.time_budget_s;
    Ok(EpisodeRollout {
        ticks,
        infractions,
        completion,
        success,
        duration_s: world.time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::route::RoutePlan;
    use crate::scenario::build_scenario;
    use crate::types::{CameraViewId, EgoState};
    use crate::world::{RoadSegment, StaticMap};

    fn straight_world(offset_y: f64) -> WorldState {
        let ego = EgoState::initial(EgoRecord {
            x: 0.0,
            y: -1.75 + offset_y,
            heading: 0.0,
            speed: 5.0,
            accel: 0.0,
        });
        let map = StaticMap {
            roads: vec![RoadSegment {
                start: [-50.0, 0.0],
                end: [200.0, 0.0],
                lanes_forward: 1,
                lanes_backward: 1,
            }],
            junctions: vec![],
            lights: vec![],
            stop_signs: vec![],
            speed_limit: 8.0,
        };
        let route = RoutePlan::new(vec![[0.0, -1.75], [200.0, -1.75]], vec![]);
        WorldState::new(ego, vec![], map, route)
    }

    #[test]
    fn tracks_a_straight_route_with_small_cross_track_error() {
        // Start half a meter off the route; the controller must pull back on.
        let mut world = straight_world(0.5);
        let mut driver = ExpertDriver::new(&world);
        for _ in 0..120 {
            let (_, controls) = driver.decide(&world);
            world.step(controls, SIM_DT_S);
        }
        let (_, lateral) = world.route.project(world.ego.current.x, world.ego.current.y);
        assert!(
            lateral.abs() < 0.2,
            "cross-track error after 12 s should be < 0.2 m, got {lateral:.3}"
        );
        assert!(world.ego.current.speed > 5.0, "should be cruising");
    }

    #[test]
    fn every_generated_scenario_completes_cleanly_under_the_expert() {
        for &id in crate::scenario::GENERATED_SCENARIOS {
            for variant in 0..crate::scenario::VARIANTS_PER_SCENARIO {
                let spec = build_scenario(id, variant, 11).unwrap();
                let rollout = run_expert_episode(&spec).unwrap();
                assert!(
                    rollout.success,
                    "{id} variant {variant}: completion {:.3}, infractions {:?}, {:.1} s",
                    rollout.completion, rollout.infractions, rollout.duration_s
                );
            }
        }
    }

    #[test]
    fn red_light_scenario_waits_for_green() {
        let spec = build_scenario("VanillaSignalizedTurnEncounterRedLight", 0, 3).unwrap();
        let rollout = run_expert_episode(&spec).unwrap();
        assert!(rollout.success, "infractions: {:?}", rollout.infractions);
        // The ego must have been nearly stopped at some point while red.
        let stopped = rollout
            .ticks
            .iter()
            .any(|t| t.time < 22.0 && t.time > 10.0 && t.ego.speed < 0.5);
        assert!(stopped, "expert should wait at the red light");
    }

    #[test]
    fn stop_sign_scenario_comes_to_a_halt_then_proceeds() {
        let spec = build_scenario("VanillaNonSignalizedTurnEncounterStopsign", 0, 9).unwrap();
        let rollout = run_expert_episode(&spec).unwrap();
        assert!(rollout.success, "infractions: {:?}", rollout.infractions);
        let min_speed = rollout
            .ticks
            .iter()
            .map(|t| t.ego.speed)
            .fold(f64::INFINITY, f64::min);
        assert!(min_speed < 0.3, "expert must actually stop, min speed {min_speed:.2}");
    }

    #[test]
    fn cut_in_produces_a_merging_context_frame() {
        let spec = build_scenario("HighwayCutIn", 0, 5).unwrap();
        let rollout = run_expert_episode(&spec).unwrap();
        let sides: Vec<LaneSide> =
            rollout.ticks.iter().filter_map(|t| t.context.merging_side).collect();
        assert!(!sides.is_empty(), "the cut-in must register as a merge");
    }

    #[test]
    fn junction_turn_context_reports_turning_inside_the_junction() {
        let spec = build_scenario("VanillaSignalizedTurnEncounterGreenLight", 0, 2).unwrap();
        let rollout = run_expert_episode(&spec).unwrap();
        let in_turn = rollout
            .ticks
            .iter()
            .any(|t| t.context.is_in_junction && t.context.command == ManeuverCommand::TurnLeft);
        assert!(in_turn, "expected an in-junction turn-left frame");
    }

    #[test]
    fn emergency_vehicle_context_points_behind_then_clears() {
        let spec = build_scenario("YieldToEmergencyVehicle", 0, 4).unwrap();
        let rollout = run_expert_episode(&spec).unwrap();
        let bearings: Vec<CameraViewId> = rollout
            .ticks
            .iter()
            .filter_map(|t| t.context.emergency_vehicle_bearing)
            .collect();
        assert!(!bearings.is_empty());
        assert!(
            bearings.contains(&CameraViewId::Back) || bearings.contains(&CameraViewId::BackLeft),
            "the siren approaches from behind: {bearings:?}"
        );
        // The ego must actually slow to yield.
        let min_speed = rollout
            .ticks
            .iter()
            .skip(20)
            .map(|t| t.ego.speed)
            .fold(f64::INFINITY, f64::min);
        assert!(min_speed < 3.2, "expert should yield, min speed {min_speed:.2}");
    }

    #[test]
    fn two_way_overtake_reports_an_opposing_lane_change() {
        let spec = build_scenario("AccidentTwoWays", 0, 6).unwrap();
        let rollout = run_expert_episode(&spec).unwrap();
        let opposing_change = rollout.ticks.iter().any(|t| {
            t.context.target_lane_side == Some(LaneSide::Left) && t.context.target_lane_opposing
        });
        assert!(opposing_change, "swerving into oncoming traffic must be flagged as such");
    }
}

