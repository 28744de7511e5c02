//! Policies under benchmark: the neural planner adapter plus two fixtures —
//! a route-following oracle (upper bound) and a brake-only policy (lower
//! bound for timeout handling).

use std::path::Path;
use std::sync::Arc;

use expertdrive_numerics::{Array, DetRng, ParamStore};
use expertdrive_policy::backbone::{encode_goal, encode_state, patchify};
use expertdrive_policy::model::{DriveModel, ViewPlan};
use expertdrive_policy::planner::TrajectoryNormalizer;
use expertdrive_policy::trainer::Trainer;
use expertdrive_sim::{
    EgoState, GoalWaypoint, RoutePlan, Trajectory, ViewRaster, WAYPOINT_SPACING_S,
};

use crate::error::{BenchError, Result};

/// Everything a policy may look at when planning: the rendered camera
/// views, the front view from the previous replan, ego state, and the
/// route's goal waypoint.
pub struct Observation<'a> {
    pub views: &'a [ViewRaster],
    pub front_prev: &'a ViewRaster,
    pub ego: &'a EgoState,
    pub goal: GoalWaypoint,
    /// Simulation tick of this replan, for deterministic noise draws.
    pub tick: usize,
    /// Episode seed, for deterministic noise draws.
    pub episode_seed: u64,
}

/// A trajectory-producing policy evaluated closed-loop.
pub trait TrajectoryPolicy: Send {
    /// Plan an ego-frame trajectory for the current observation.
    fn plan(&mut self, obs: &Observation<'_>) -> Result<Trajectory>;

    /// Short name recorded in reports.
    fn name(&self) -> &str;
}

/// Stateless rng stream tag for closed-loop sampling draws.
const TAG_CLOSED_LOOP: u64 = 10;

/// The trained flow-matching planner behind the [`TrajectoryPolicy`]
/// interface. Cheap to clone: parameters are shared.
#[derive(Clone)]
pub struct NeuralPolicy {
    pub model: Arc<DriveModel>,
    pub store: Arc<ParamStore>,
    pub normalizer: TrajectoryNormalizer,
    name: String,
}

impl NeuralPolicy {
    pub fn new(
        model: DriveModel,
        store: ParamStore,
        normalizer: TrajectoryNormalizer,
        name: impl Into<String>,
    ) -> Self {
        Self {
            model: Arc::new(model),
            store: Arc::new(store),
            normalizer,
            name: name.into(),
        }
    }

    /// Wrap the live state of a trainer.
    pub fn from_trainer(trainer: Trainer, name: impl Into<String>) -> Self {
        Self::new(trainer.model, trainer.store, trainer.normalizer, name)
    }

    /// Load a checkpoint file.
    pub fn from_checkpoint(path: &Path, name: impl Into<String>) -> Result<Self> {
        let trainer = Trainer::load_checkpoint(path)?;
        Ok(Self::from_trainer(trainer, name))
    }
}

impl TrajectoryPolicy for NeuralPolicy {
    fn plan(&mut self, obs: &Observation<'_>) -> Result<Trajectory> {
        let views: Vec<Array> = obs.views.iter().map(|v| patchify(&v.grid)).collect();
        let front_prev = patchify(&obs.front_prev.grid);
        let state = encode_state(&obs.ego.current, &obs.ego.history);
        let goal = encode_goal(&obs.goal);
        let inputs = expertdrive_policy::model::ModelInputs {
            views: &views,
            front_prev: &front_prev,
            state: &state,
            goal: &goal,
        };
        let plan = if self.model.config.use_vision_moe {
            ViewPlan::Routed { noise: None }
        } else {
            ViewPlan::None
        };
        let cache = self.model.build_prefix_cache(&self.store, &inputs, plan)?;
        let mut rng =
            DetRng::derive(obs.episode_seed, &[TAG_CLOSED_LOOP, obs.tick as u64]);
        let normalized = self.model.sample_plan(&self.store, &cache, &mut rng)?;
        let traj = self.normalizer.denormalize(&normalized)?;
        if traj.waypoints.iter().any(|wp| !wp[0].is_finite() || !wp[1].is_finite()) {
            return Err(BenchError::NonFinitePlan { tick: obs.tick });
        }
        Ok(traj)
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Privileged upper-bound fixture: reads the route geometry directly and
/// emits waypoints marching along it at a fixed speed.
pub struct RouteFollowPolicy {
    route: RoutePlan,
    speed: f64,
}

impl RouteFollowPolicy {
    pub fn new(route: RoutePlan, speed: f64) -> Self {
        Self { route, speed }
    }
}

impl TrajectoryPolicy for RouteFollowPolicy {
    fn plan(&mut self, obs: &Observation<'_>) -> Result<Trajectory> {
        let ego = obs.ego.current;
        let (s0, _) = self.route.project(ego.x, ego.y);
        let (sin_h, cos_h) = ego.heading.sin_cos();
        let mut traj = Trajectory::zeros();
        for (i, wp) in traj.waypoints.iter_mut().enumerate() {
            let s = s0 + self.speed * WAYPOINT_SPACING_S * (i + 1) as f64;
            let [wx, wy] = self.route.position_at(s.min(self.route.total_length()));
            let dx = wx - ego.x;
            let dy = wy - ego.y;
            *wp = [cos_h * dx + sin_h * dy, -sin_h * dx + cos_h * dy];
        }
        Ok(traj)
    }

    fn name(&self) -> &str {
        "route-follow-oracle"
    }
}

/// Lower-bound fixture: an all-zero trajectory, which the controller
/// treats as a full-stop command. Episodes end in route timeout.
pub struct ZeroPolicy;

impl TrajectoryPolicy for ZeroPolicy {
    fn plan(&mut self, _obs: &Observation<'_>) -> Result<Trajectory> {
        Ok(Trajectory::zeros())
    }

    fn name(&self) -> &str {
        "zero"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn route_follower_emits_forward_waypoints_on_a_straight_route() {
        let route = RoutePlan::new(
            (0..40).map(|i| [i as f64 * 5.0, 0.0]).collect(),
            vec![],
        );
        let mut policy = RouteFollowPolicy::new(route, 5.0);
        let ego = EgoState::initial(expertdrive_sim::EgoRecord {
            x: 10.0,
            y: 0.0,
            heading: 0.0,
            speed: 5.0,
            accel: 0.0,
        });
        let views: Vec<ViewRaster> = Vec::new();
        let obs = Observation {
            views: &views,
            front_prev: &ViewRaster {
                view: expertdrive_sim::CameraViewId::Front,
                grid: vec![0.0; 5 * 32 * 32],
            },
            ego: &ego,
            goal: GoalWaypoint {
                x: 20.0,
                y: 0.0,
                command: expertdrive_sim::ManeuverCommand::Follow,
            },
            tick: 0,
            episode_seed: 1,
        };
        let traj = policy.plan(&obs).unwrap();
        for (i, wp) in traj.waypoints.iter().enumerate() {
            let expected_x = 5.0 * WAYPOINT_SPACING_S * (i + 1) as f64;
            assert!((wp[0] - expected_x).abs() < 1e-9, "waypoint {i}: {:?}", wp);
            assert!(wp[1].abs() < 1e-9);
        }
    }
}
