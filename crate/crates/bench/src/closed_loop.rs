//! Closed-loop episode rollout: the policy replans at a fixed cadence, a
//! PID layer tracks the latest plan between replans, infractions are
//! monitored every tick, and per-tick traces feed the episode metrics.

use expertdrive_sim::{
    compute_controls, render_views, spawn_scenario, wrap_angle, ControlState, EgoRecord,
    InfractionTracker, ScenarioSpec, SimError, Trajectory, ViewRaster, COMPLETION_DONE,
    GOAL_LOOKAHEAD_M, SIM_DT_S,
};

use crate::error::Result;
use crate::policy::{Observation, TrajectoryPolicy};
use crate::report::EpisodeReport;

/// Ticks between policy replans (10 Hz simulation, ~3.3 Hz planning).
pub const REPLAN_INTERVAL_TICKS: usize = 3;

/// Radius for the nearby-traffic speed reference, meters.
pub const TRAFFIC_RADIUS_M: f64 = 30.0;

/// A plan pinned to the world frame so it can be re-expressed in the ego
/// frame while the vehicle moves between replans.
struct WorldPlan {
    waypoints: [[f64; 2]; expertdrive_sim::TRAJECTORY_LEN],
}

impl WorldPlan {
    fn from_ego_frame(traj: &Trajectory, ego: &EgoRecord) -> Self {
        let (sin_h, cos_h) = ego.heading.sin_cos();
        let mut waypoints = [[0.0; 2]; expertdrive_sim::TRAJECTORY_LEN];
        for (out, wp) in waypoints.iter_mut().zip(&traj.waypoints) {
            *out = [
                ego.x + cos_h * wp[0] - sin_h * wp[1],
                ego.y + sin_h * wp[0] + cos_h * wp[1],
            ];
        }
        Self { waypoints }
    }

    fn to_ego_frame(&self, ego: &EgoRecord) -> Trajectory {
        let (sin_h, cos_h) = ego.heading.sin_cos();
        let mut traj = Trajectory::zeros();
        for (out, wp) in traj.waypoints.iter_mut().zip(&self.waypoints) {
            let dx = wp[0] - ego.x;
            let dy = wp[1] - ego.y;
            *out = [cos_h * dx + sin_h * dy, -sin_h * dx + cos_h * dy];
        }
        traj
    }
}

/// Run one policy-driven episode and collect everything the metrics need.
///
/// A policy error or a non-finite plan marks the episode as a policy
/// failure (never a success) without aborting the benchmark.
pub fn run_episode(policy: &mut dyn TrajectoryPolicy, spec: &ScenarioSpec) -> Result<EpisodeReport> {
    let mut world = spawn_scenario(spec);
    let route = world.route.clone();
    let mut tracker = InfractionTracker::new(&world, spec.allows_opposing_lane, spec.time_budget_s);
    let mut control = ControlState::default();

    let mut infractions = Vec::new();
    let mut ego_speeds = Vec::new();
    let mut traffic_speeds = Vec::new();
    let mut jerks = Vec::new();
    let mut lat_accs = Vec::new();

    let mut current_plan: Option<WorldPlan> = None;
    let mut front_prev: Option<ViewRaster> = None;
    let mut policy_failure = false;
    let mut prev_accel = world.ego.current.accel;
    let mut prev_heading = world.ego.current.heading;

    let max_ticks = ((spec.time_budget_s + 5.0) / SIM_DT_S) as usize;
    for tick in 0..max_ticks {
        let goal = match route.next_goal_waypoint(&world.ego, GOAL_LOOKAHEAD_M) {
            Ok(g) => g,
            Err(SimError::OffRoute { .. }) => break, // tracker already recorded it
            Err(e) => return Err(e.into()),
        };

        if tick % REPLAN_INTERVAL_TICKS == 0 {
            let views = render_views(
                &world.map,
                &route,
                &world.agent_snapshots(),
                world.time,
                &world.ego,
            );
            let prev = front_prev.take().unwrap_or_else(|| views[0].clone());
            let obs = Observation {
                views: &views,
                front_prev: &prev,
                ego: &world.ego,
                goal,
                tick,
                episode_seed: spec.seed,
            };
            match policy.plan(&obs) {
                Ok(traj) => {
                    current_plan = Some(WorldPlan::from_ego_frame(&traj, &world.ego.current));
                }
                Err(_) => {
                    policy_failure = true;
                    break;
                }
            }
            front_prev = Some(views[0].clone());
        }

        let plan = current_plan.as_ref().expect("replan happens on tick 0");
        let ego_traj = plan.to_ego_frame(&world.ego.current);
        let controls = compute_controls(world.ego.current.speed, &ego_traj, &mut control, SIM_DT_S);
        world.step(controls, SIM_DT_S);

        let ego = world.ego.current;
        ego_speeds.push(ego.speed);
        traffic_speeds.push(world.nearby_traffic_mean_speed(TRAFFIC_RADIUS_M));
        jerks.push((ego.accel - prev_accel) / SIM_DT_S);
        lat_accs.push(ego.speed * wrap_angle(ego.heading - prev_heading) / SIM_DT_S);
        prev_accel = ego.accel;
        prev_heading = ego.heading;

        infractions.extend(tracker.observe(&world));
        if tracker.terminal() {
            break;
        }
        if route.completion(ego.x, ego.y) >= COMPLETION_DONE {
            break;
        }
    }

    let completion = route.completion(world.ego.current.x, world.ego.current.y);
    let success = !policy_failure
        && completion >= COMPLETION_DONE
        && infractions.is_empty()
        && world.time <= spec.time_budget_s;
    Ok(EpisodeReport {
        scenario_id: spec.scenario_id.clone(),
        variant: spec.variant,
        seed: spec.seed,
        skill: expertdrive_sim::annotate_skill(&spec.scenario_id, false)?,
        route_completion: completion,
        infractions,
        success,
        policy_failure,
        duration_s: world.time,
        ego_speed_trace: ego_speeds,
        traffic_speed_trace: traffic_speeds,
        jerk_trace: jerks,
        lat_acc_trace: lat_accs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{RouteFollowPolicy, ZeroPolicy};
    use expertdrive_sim::{build_scenario, InfractionKind};

    #[test]
    fn zero_policy_times_out_without_success() {
        let spec = build_scenario("HighwayCutIn", 0, 3).unwrap();
        let mut policy = ZeroPolicy;
        let report = run_episode(&mut policy, &spec).unwrap();
        assert!(!report.success);
        assert!(report.route_completion < 0.05);
        assert!(
            report
                .infractions
                .iter()
                .any(|i| i.kind == InfractionKind::RouteTimeout),
            "expected a route timeout, got {:?}",
            report.infractions
        );
    }

    #[test]
    fn oracle_policy_finishes_a_scenario() {
        let spec = build_scenario("HighwayCutIn", 0, 3).unwrap();
        let mut policy = RouteFollowPolicy::new(spec.route(), 6.0);
        let report = run_episode(&mut policy, &spec).unwrap();
        assert!(
            report.route_completion >= COMPLETION_DONE,
            "oracle should finish: completion {:.3}, infractions {:?}",
            report.route_completion,
            report.infractions
        );
    }

    #[test]
    fn episodes_are_deterministic() {
        let spec = build_scenario("LaneChange", 1, 7).unwrap();
        let run = || {
            let mut policy = RouteFollowPolicy::new(spec.route(), 5.0);
            run_episode(&mut policy, &spec).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}
