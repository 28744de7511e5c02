//! Episode-level driving metrics: open-loop waypoint error, driving score,
//! efficiency relative to surrounding traffic, and ride comfort.

use expertdrive_sim::{Infraction, Trajectory, TRAJECTORY_LEN};

/// Thresholds for the comfort metric, exposed for configuration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ComfortLimits {
    /// Longitudinal jerk bound, m/s^3.
    pub jerk: f64,
    /// Lateral acceleration bound, m/s^2.
    pub lat_acc: f64,
}

impl Default for ComfortLimits {
    fn default() -> Self {
        Self { jerk: 4.0, lat_acc: 4.0 }
    }
}

/// Mean Euclidean distance between predicted and ground-truth waypoints.
pub fn open_loop_l2(pred: &Trajectory, gt: &Trajectory) -> f64 {
    let mut total = 0.0;
    for (p, g) in pred.waypoints.iter().zip(&gt.waypoints) {
        let dx = p[0] - g[0];
        let dy = p[1] - g[1];
        total += (dx * dx + dy * dy).sqrt();
    }
    total / TRAJECTORY_LEN as f64
}

/// Route completion times the product of infraction penalties, on a 0–100
/// scale.
pub fn driving_score(route_completion: f64, infractions: &[Infraction]) -> f64 {
    let penalty: f64 = infractions.iter().map(|i| i.penalty_factor).product();
    100.0 * route_completion.clamp(0.0, 1.0) * penalty
}

/// Ego speed relative to surrounding traffic, in percent. The reference is
/// the mean of the nearby-traffic speed over ticks where traffic was
/// present, floored (typically at the speed limit) so empty roads compare
/// the ego against the limit instead of dividing by zero.
pub fn efficiency(ego_speeds: &[f64], traffic_speeds: &[Option<f64>], floor: f64) -> f64 {
    assert!(!ego_speeds.is_empty(), "efficiency needs a nonempty speed trace");
    assert!(floor > 0.0, "efficiency floor must be positive");
    let ego_mean = ego_speeds.iter().sum::<f64>() / ego_speeds.len() as f64;
    let present: Vec<f64> = traffic_speeds.iter().filter_map(|s| *s).collect();
    let traffic_mean = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    100.0 * ego_mean / traffic_mean.max(floor)
}

/// Fraction of timesteps within both the jerk and lateral-acceleration
/// bounds, in percent.
pub fn comfort(jerk: &[f64], lat_acc: &[f64], limits: ComfortLimits) -> f64 {
    assert_eq!(jerk.len(), lat_acc.len(), "comfort traces must align");
    assert!(!jerk.is_empty(), "comfort needs a nonempty trace");
    let ok = jerk
        .iter()
        .zip(lat_acc)
        .filter(|(j, a)| j.abs() <= limits.jerk && a.abs() <= limits.lat_acc)
        .count();
    100.0 * ok as f64 / jerk.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use expertdrive_numerics::DetRng;
    use expertdrive_sim::InfractionKind;

    fn infraction(kind: InfractionKind) -> Infraction {
        Infraction { kind, time: 1.0, penalty_factor: kind.penalty_factor() }
    }

    #[test]
    fn identical_trajectories_have_zero_error() {
        let mut t = Trajectory::zeros();
        for (i, wp) in t.waypoints.iter_mut().enumerate() {
            *wp = [i as f64, -(i as f64)];
        }
        assert_eq!(open_loop_l2(&t, &t), 0.0);
    }

    #[test]
    fn uniform_offset_is_the_hypotenuse() {
        let gt = Trajectory::zeros();
        let mut pred = Trajectory::zeros();
        for wp in pred.waypoints.iter_mut() {
            *wp = [0.3, 0.4];
        }
        assert_relative_eq!(open_loop_l2(&pred, &gt), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn open_loop_l2_matches_independent_recomputation() {
        let mut rng = DetRng::from_seed(17);
        let mut a = Trajectory::zeros();
        let mut b = Trajectory::zeros();
        for i in 0..TRAJECTORY_LEN {
            a.waypoints[i] = [rng.uniform_in(-5.0, 5.0), rng.uniform_in(-5.0, 5.0)];
            b.waypoints[i] = [rng.uniform_in(-5.0, 5.0), rng.uniform_in(-5.0, 5.0)];
        }
        let oracle = (0..TRAJECTORY_LEN)
            .map(|i| {
                ((a.waypoints[i][0] - b.waypoints[i][0]).powi(2)
                    + (a.waypoints[i][1] - b.waypoints[i][1]).powi(2))
                .sqrt()
            })
            .sum::<f64>()
            / TRAJECTORY_LEN as f64;
        assert_relative_eq!(open_loop_l2(&a, &b), oracle, epsilon = 1e-12);
    }

    #[test]
    fn clean_full_route_scores_one_hundred() {
        assert_eq!(driving_score(1.0, &[]), 100.0);
    }

    #[test]
    fn collision_at_partial_completion() {
        let score = driving_score(0.8, &[infraction(InfractionKind::Collision)]);
        assert_relative_eq!(score, 40.0, epsilon = 1e-12);
    }

    #[test]
    fn two_red_lights_compound() {
        let infs = [infraction(InfractionKind::RedLight), infraction(InfractionKind::RedLight)];
        assert_relative_eq!(driving_score(1.0, &infs), 49.0, epsilon = 1e-9);
    }

    #[test]
    fn driving_score_never_increases_with_more_infractions() {
        let kinds = [
            InfractionKind::Collision,
            InfractionKind::RedLight,
            InfractionKind::StopSign,
            InfractionKind::WrongLane,
            InfractionKind::RouteTimeout,
        ];
        let mut infs: Vec<Infraction> = Vec::new();
        let mut prev = driving_score(0.9, &infs);
        for kind in kinds {
            infs.push(infraction(kind));
            let next = driving_score(0.9, &infs);
            assert!(next <= prev, "{kind:?} raised the score: {prev} -> {next}");
            prev = next;
        }
    }

    #[test]
    fn ego_matching_traffic_is_fully_efficient() {
        let ego = vec![6.0; 50];
        let traffic = vec![Some(6.0); 50];
        assert_relative_eq!(efficiency(&ego, &traffic, 8.0), 100.0 * 6.0 / 8.0);
        // With traffic faster than the floor the ratio is against traffic.
        let traffic_fast = vec![Some(9.0); 50];
        let ego_fast = vec![9.0; 50];
        assert_relative_eq!(efficiency(&ego_fast, &traffic_fast, 8.0), 100.0, epsilon = 1e-12);
    }

    #[test]
    fn half_traffic_speed_is_half_efficiency() {
        let ego = vec![4.5; 10];
        let traffic = vec![Some(9.0); 10];
        assert_relative_eq!(efficiency(&ego, &traffic, 8.0), 50.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_traffic_compares_against_the_floor() {
        let ego = vec![4.0; 10];
        let traffic: Vec<Option<f64>> = vec![None; 10];
        assert_relative_eq!(efficiency(&ego, &traffic, 8.0), 50.0, epsilon = 1e-12);
    }

    #[test]
    fn smooth_episode_is_fully_comfortable() {
        let jerk = vec![0.0; 100];
        let lat = vec![0.0; 100];
        assert_eq!(comfort(&jerk, &lat, ComfortLimits::default()), 100.0);
    }

    #[test]
    fn single_hard_brake_in_one_hundred_steps() {
        let mut jerk = vec![0.0; 100];
        jerk[40] = -7.5;
        let lat = vec![0.0; 100];
        assert_relative_eq!(comfort(&jerk, &lat, ComfortLimits::default()), 99.0);
    }

    #[test]
    fn all_violating_trace_scores_zero() {
        let jerk = vec![9.0; 20];
        let lat = vec![9.0; 20];
        assert_eq!(comfort(&jerk, &lat, ComfortLimits::default()), 0.0);
    }
}
