//! Synthetic micro-tasks with known structure. Each generator isolates one
//! property the full stack must exhibit — routers that become accurate when
//! their inputs carry the answer, a planner that keeps two solution modes
//! alive, staged training that stays stable, and a skewed gate that the
//! balance penalty must keep open — without the cost or confounds of
//! simulator data.

use expertdrive_numerics::{Array, DetRng};
use expertdrive_sim::{Trajectory, NUM_VIEWS};

use crate::backbone::{GOAL_FEATURES, PATCHES_PER_VIEW, PATCH_FEATURES, STATE_FEATURES};
use crate::data::TrainSample;

/// Number of synthetic skill classes (== expert count of the standard bank).
pub const SYNTH_SKILLS: usize = 6;

/// Seconds between consecutive future waypoints.
const WAYPOINT_DT_S: f64 = 0.2;

fn noise_view(rng: &mut DetRng, std: f64) -> Array {
    Array::from_vec(
        &[PATCHES_PER_VIEW, PATCH_FEATURES],
        rng.normal_vec(PATCHES_PER_VIEW * PATCH_FEATURES, std),
    )
    .expect("view shape")
}

/// Stamp a skill-identifying stripe onto a patchified view: a contiguous
/// feature band, one band per skill, raised well above the noise floor on
/// every patch.
fn stamp_skill_stripe(view: &mut Array, skill: usize) {
    const BAND: usize = 50;
    let start = skill * BAND;
    for p in 0..PATCHES_PER_VIEW {
        for f in start..start + BAND {
            let v = view.at(p, f);
            view.set(p, f, v + 1.5);
        }
    }
}

/// Goal features whose planar direction encodes the view label and whose
/// command one-hot adds a weaker correlated cue.
fn view_coded_goal(view_label: usize) -> Array {
    let angle = std::f64::consts::TAU * view_label as f64 / NUM_VIEWS as f64;
    let mut g = vec![0.0; GOAL_FEATURES];
    g[0] = angle.cos();
    g[1] = angle.sin();
    g[2 + view_label % 5] = 1.0;
    Array::from_vec(&[1, GOAL_FEATURES], g).expect("goal shape")
}

fn state_with_skill_cue(rng: &mut DetRng, skill: usize) -> Array {
    let mut s = rng.normal_vec(STATE_FEATURES, 0.2);
    s[skill] += 1.0;
    Array::from_vec(&[1, STATE_FEATURES], s).expect("state shape")
}

/// Constant-curvature future: speed `v` m/s, heading rate `omega` rad/s,
/// starting at the origin heading +x.
pub fn arc_future(v: f64, omega: f64) -> Trajectory {
    let mut t = Trajectory::zeros();
    let mut x = 0.0f64;
    let mut y = 0.0f64;
    let mut heading = 0.0f64;
    for wp in t.waypoints.iter_mut() {
        x += v * WAYPOINT_DT_S * heading.cos();
        y += v * WAYPOINT_DT_S * heading.sin();
        heading += omega * WAYPOINT_DT_S;
        *wp = [x, y];
    }
    t
}

fn sample_with(
    rng: &mut DetRng,
    view_label: usize,
    skill_label: usize,
    future: Trajectory,
    episode: usize,
) -> TrainSample {
    let mut views: Vec<Array> = (0..NUM_VIEWS).map(|_| noise_view(rng, 0.3)).collect();
    stamp_skill_stripe(&mut views[0], skill_label);
    let mut front_prev = noise_view(rng, 0.3);
    stamp_skill_stripe(&mut front_prev, skill_label);
    TrainSample {
        state: state_with_skill_cue(rng, skill_label),
        goal: view_coded_goal(view_label),
        front_prev,
        views,
        future,
        view_label,
        skill_label,
        episode,
    }
}

/// Routing task: every label is recoverable from the router's own inputs.
/// The view label is spelled out in the goal direction; the skill label is
/// stamped into the front view and the ego state. Futures bend with the
/// skill so the flow loss also has structure to learn.
pub fn separable_routing_set(n: usize, seed: u64) -> Vec<TrainSample> {
    let mut rng = DetRng::from_seed(seed);
    (0..n)
        .map(|i| {
            let view_label = i % NUM_VIEWS;
            let skill_label = (i / NUM_VIEWS) % SYNTH_SKILLS;
            let omega = (skill_label as f64 - 2.5) * 0.08;
            sample_with(&mut rng, view_label, skill_label, arc_future(8.0, omega), i % 8)
        })
        .collect()
}

/// The two reference modes of the bimodal task: a left arc and its mirror.
pub fn bimodal_modes() -> [Trajectory; 2] {
    let left = arc_future(6.0, 0.6);
    let mut right = left;
    for wp in right.waypoints.iter_mut() {
        wp[1] = -wp[1];
    }
    [left, right]
}

/// Ambiguity task: one frozen scene paired with two mirrored futures in
/// equal proportion. Nothing in the scene says which way to go, so a
/// planner that averages produces a straight-ahead compromise that matches
/// neither mode; a planner that commits reproduces both.
pub fn bimodal_turn_set(n: usize, seed: u64) -> Vec<TrainSample> {
    let mut rng = DetRng::from_seed(seed);
    let views: Vec<Array> = (0..NUM_VIEWS).map(|_| noise_view(&mut rng, 0.3)).collect();
    let front_prev = views[0].clone();
    let state = Array::from_vec(&[1, STATE_FEATURES], rng.normal_vec(STATE_FEATURES, 0.2))
        .expect("state shape");
    let goal = view_coded_goal(0);
    let modes = bimodal_modes();
    (0..n)
        .map(|i| {
            let skill_label = i % 2;
            TrainSample {
                views: views.clone(),
                front_prev: front_prev.clone(),
                state: state.clone(),
                goal: goal.clone(),
                future: modes[skill_label],
                view_label: 0,
                skill_label,
                episode: i % 4,
            }
        })
        .collect()
}

/// Two-skill task for staged training: skill 0 drives straight and fast,
/// skill 1 takes a firm left arc, and both labels are recoverable from the
/// inputs as in [`separable_routing_set`].
pub fn specialization_set(n: usize, seed: u64) -> Vec<TrainSample> {
    let mut rng = DetRng::from_seed(seed);
    (0..n)
        .map(|i| {
            let skill_label = i % 2;
            let view_label = i % NUM_VIEWS;
            let future = if skill_label == 0 {
                arc_future(8.0, 0.0)
            } else {
                arc_future(6.0, 0.5)
            };
            sample_with(&mut rng, view_label, skill_label, future, i % 8)
        })
        .collect()
}

/// Skewed variant of [`specialization_set`]: the minority skill appears
/// once every `minority_every` samples, inviting the gate to collapse onto
/// the majority experts unless the balance penalty pushes back.
pub fn skewed_gate_set(n: usize, seed: u64, minority_every: usize) -> Vec<TrainSample> {
    assert!(minority_every >= 2, "minority_every must leave room for the majority");
    let mut rng = DetRng::from_seed(seed);
    (0..n)
        .map(|i| {
            let skill_label = usize::from(i % minority_every == 0);
            let view_label = i % NUM_VIEWS;
            let future = if skill_label == 0 {
                arc_future(8.0, 0.0)
            } else {
                arc_future(6.0, 0.5)
            };
            sample_with(&mut rng, view_label, skill_label, future, i % 8)
        })
        .collect()
}

/// Mean distance from `plan` to the closest of `modes`, plus the index of
/// that mode.
pub fn nearest_mode(plan: &Trajectory, modes: &[Trajectory]) -> (usize, f64) {
    assert!(!modes.is_empty());
    let mut best = (0, f64::INFINITY);
    for (i, m) in modes.iter().enumerate() {
        let d = plan.mean_l2(m);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_set_covers_all_labels() {
        let set = separable_routing_set(72, 5);
        for v in 0..NUM_VIEWS {
            assert!(set.iter().any(|s| s.view_label == v), "view {v} missing");
        }
        for k in 0..SYNTH_SKILLS {
            assert!(set.iter().any(|s| s.skill_label == k), "skill {k} missing");
        }
        // The stripe makes front views of different skills far apart while
        // same-skill fronts stay close in the stamped band.
        let a = set.iter().find(|s| s.skill_label == 0).unwrap();
        let b = set.iter().find(|s| s.skill_label == 3).unwrap();
        let band_mean = |arr: &Array, skill: usize| {
            let mut total = 0.0;
            for p in 0..PATCHES_PER_VIEW {
                for f in skill * 50..skill * 50 + 50 {
                    total += arr.at(p, f);
                }
            }
            total / (PATCHES_PER_VIEW * 50) as f64
        };
        assert!(band_mean(&a.views[0], 0) > 1.0);
        assert!(band_mean(&b.views[0], 0) < 0.5);
        assert!(band_mean(&b.views[0], 3) > 1.0);
    }

    #[test]
    fn bimodal_modes_are_exact_mirrors_and_set_alternates() {
        let [left, right] = bimodal_modes();
        for (l, r) in left.waypoints.iter().zip(&right.waypoints) {
            assert_eq!(l[0], r[0]);
            assert_eq!(l[1], -r[1]);
        }
        assert!(left.waypoints[TRAJECTORY_LEN - 1][1] > 1.0, "left arc bends left");

        let set = bimodal_turn_set(10, 3);
        for (i, s) in set.iter().enumerate() {
            assert_eq!(s.skill_label, i % 2);
            assert_eq!(s.future, if i % 2 == 0 { left } else { right });
            // The scene is frozen: every sample shares identical inputs.
            assert_eq!(s.views[0].data(), set[0].views[0].data());
            assert_eq!(s.state.data(), set[0].state.data());
        }
    }

    #[test]
    fn skewed_set_has_requested_minority_rate() {
        let set = skewed_gate_set(100, 9, 10);
        let minority = set.iter().filter(|s| s.skill_label == 1).count();
        assert_eq!(minority, 10);
    }

    #[test]
    fn nearest_mode_picks_the_closer_reference() {
        let [left, right] = bimodal_modes();
        let (i, d) = nearest_mode(&left, &[left, right]);
        assert_eq!(i, 0);
        assert!(d < 1e-12);
        let (j, _) = nearest_mode(&right, &[left, right]);
        assert_eq!(j, 1);
    }
}
