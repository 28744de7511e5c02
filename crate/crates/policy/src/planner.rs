//! Flow-matching trajectory generation: training regresses a velocity
//! field along straight probability paths between Gaussian noise and the
//! normalized expert trajectory; sampling integrates that field with a
//! fixed-step Euler scheme from fresh noise to a plan.

use expertdrive_numerics::{Array, DetRng, Graph, NodeId};
use expertdrive_sim::{Trajectory, TRAJECTORY_LEN};
use serde::{Deserialize, Serialize};

use crate::error::{PolicyError, Result};

/// Default number of Euler integration steps at sampling time.
pub const DEFAULT_FLOW_STEPS: usize = 10;

/// Per-dataset affine normalization of trajectory waypoints: subtract the
/// dataset mean point and divide by one shared scale so coordinates are
/// roughly unit-range. The same transform must be inverted on samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryNormalizer {
    /// Mean waypoint over the dataset, `(x, y)`.
    pub mean: [f64; 2],
    /// Root-mean-square deviation from the mean, shared across both axes.
    pub scale: f64,
}

impl TrajectoryNormalizer {
    /// Identity transform.
    pub fn identity() -> Self {
        Self { mean: [0.0, 0.0], scale: 1.0 }
    }

    /// Fit against every waypoint of every trajectory. The scale has a
    /// small floor so a degenerate dataset cannot divide by zero.
    pub fn fit<'a>(trajectories: impl IntoIterator<Item = &'a Trajectory>) -> Result<Self> {
        let mut n = 0usize;
        let mut sum = [0.0f64; 2];
        let mut all = Vec::new();
        for traj in trajectories {
            for wp in &traj.waypoints {
                sum[0] += wp[0];
                sum[1] += wp[1];
                all.push(*wp);
                n += 1;
            }
        }
        if n == 0 {
            return Err(PolicyError::EmptyDataset {
                detail: "normalizer fit needs at least one trajectory".into(),
            });
        }
        let mean = [sum[0] / n as f64, sum[1] / n as f64];
        let var: f64 = all
            .iter()
            .map(|wp| {
                let dx = wp[0] - mean[0];
                let dy = wp[1] - mean[1];
                dx * dx + dy * dy
            })
            .sum::<f64>()
            / (2.0 * n as f64);
        let scale = var.sqrt().max(1e-6);
        Ok(Self { mean, scale })
    }

    /// Trajectory to a normalized `[TRAJECTORY_LEN, 2]` matrix.
    pub fn normalize(&self, traj: &Trajectory) -> Array {
        let mut data = Vec::with_capacity(TRAJECTORY_LEN * 2);
        for wp in &traj.waypoints {
            data.push((wp[0] - self.mean[0]) / self.scale);
            data.push((wp[1] - self.mean[1]) / self.scale);
        }
        Array::from_vec(&[TRAJECTORY_LEN, 2], data).expect("trajectory shape")
    }

    /// Inverse transform back to an ego-frame trajectory.
    pub fn denormalize(&self, points: &Array) -> Result<Trajectory> {
        if points.shape() != [TRAJECTORY_LEN, 2] {
            return Err(PolicyError::ShapeMismatch {
                expected: format!("[{TRAJECTORY_LEN}, 2]"),
                got: format!("{:?}", points.shape()),
            });
        }
        let mut traj = Trajectory::zeros();
        for (i, wp) in traj.waypoints.iter_mut().enumerate() {
            wp[0] = points.at(i, 0) * self.scale + self.mean[0];
            wp[1] = points.at(i, 1) * self.scale + self.mean[1];
        }
        Ok(traj)
    }
}

/// One flow-matching training example: the interpolation time, the point
/// on the noise-to-data path, and the regression target.
#[derive(Debug, Clone)]
pub struct FlowSample {
    /// Interpolation time in `[0, 1)`.
    pub tau: f64,
    /// `(1 - tau) * noise + tau * target_points`, shape `[TRAJECTORY_LEN, 2]`.
    pub x_tau: Array,
    /// Straight-path velocity `target_points - noise`.
    pub velocity: Array,
}

/// Draw one flow-matching example for a normalized trajectory.
pub fn make_flow_sample(rng: &mut DetRng, target: &Array) -> FlowSample {
    assert_eq!(target.shape(), &[TRAJECTORY_LEN, 2], "normalized trajectory shape");
    let tau = rng.uniform();
    let noise = Array::from_vec(&[TRAJECTORY_LEN, 2], rng.normal_vec(TRAJECTORY_LEN * 2, 1.0))
        .expect("noise shape");
    let mut x_tau = noise.clone();
    x_tau.scale_assign(1.0 - tau);
    let mut scaled_target = target.clone();
    scaled_target.scale_assign(tau);
    x_tau.add_assign(&scaled_target);
    let mut velocity = target.clone();
    velocity.add_assign(&{
        let mut neg = noise;
        neg.scale_assign(-1.0);
        neg
    });
    FlowSample { tau, x_tau, velocity }
}

/// Flow-matching regression loss: mean squared error between the
/// predicted velocity field and the straight-path target, averaged over
/// every waypoint coordinate.
pub fn flow_matching_loss(g: &mut Graph, predicted: NodeId, target: NodeId) -> NodeId {
    let diff = g.sub(predicted, target);
    let sq = g.mul(diff, diff);
    g.mean_all(sq)
}

/// Integrate a velocity field from `x0` at time 0 to time 1 with `steps`
/// fixed Euler steps: `x <- x + (1/steps) * field(x, tau)` at
/// `tau = i / steps`. A field that is constant in `x` and `tau` is
/// integrated exactly for any step count.
pub fn integrate_flow<F>(mut field: F, x0: Array, steps: usize) -> Result<Array>
where
    F: FnMut(&Array, f64) -> Result<Array>,
{
    assert!(steps > 0, "at least one integration step");
    let dt = 1.0 / steps as f64;
    let mut x = x0;
    for i in 0..steps {
        let tau = i as f64 * dt;
        let mut v = field(&x, tau)?;
        if v.shape() != x.shape() {
            return Err(PolicyError::ShapeMismatch {
                expected: format!("{:?}", x.shape()),
                got: format!("{:?}", v.shape()),
            });
        }
        v.scale_assign(dt);
        x.add_assign(&v);
    }
    Ok(x)
}

/// Draw the standard-normal starting point for one sampling pass.
pub fn draw_flow_start(rng: &mut DetRng) -> Array {
    Array::from_vec(&[TRAJECTORY_LEN, 2], rng.normal_vec(TRAJECTORY_LEN * 2, 1.0))
        .expect("start shape")
}
