//! Converts recorded driving datasets into model-ready training samples:
//! camera views are re-rendered from the episode blueprint and
//! patchified, ego state and goal become feature rows, and episodes are
//! split between training and validation so no episode leaks across the
//! boundary.

use expertdrive_numerics::Array;
use expertdrive_sim::{render_views, Dataset, EgoState, Frame, Trajectory};

use crate::backbone::{encode_goal, encode_state, patchify};
use crate::error::{PolicyError, Result};

/// How many simulation ticks behind the current frame the previous
/// front-view keyframe sits. Matches the closed-loop replanning cadence,
/// so training and deployment see the same temporal gap.
pub const PREV_FRAME_LAG_TICKS: usize = 3;

/// Default stride, in ticks, between consecutive training samples drawn
/// from one episode.
pub const DEFAULT_FRAME_STRIDE: usize = 5;

/// One model-ready training example.
#[derive(Debug, Clone)]
pub struct TrainSample {
    /// All camera views at the sample tick, patchified, indexed by view.
    pub views: Vec<Array>,
    /// Front view from `PREV_FRAME_LAG_TICKS` earlier, patchified.
    pub front_prev: Array,
    /// Ego-state features `[1, STATE_FEATURES]`.
    pub state: Array,
    /// Goal features `[1, GOAL_FEATURES]`.
    pub goal: Array,
    /// Ego-frame expert future, un-normalized.
    pub future: Trajectory,
    /// Annotated camera view index.
    pub view_label: usize,
    /// Annotated skill index.
    pub skill_label: usize,
    /// Index of the source episode within the dataset.
    pub episode: usize,
}

fn patchified_views(frame: &Frame, meta_spec: &expertdrive_sim::ScenarioSpec) -> Vec<Array> {
    let route = meta_spec.route();
    let ego = EgoState { current: frame.ego, history: frame.history };
    render_views(&meta_spec.map, &route, &frame.agents, frame.time, &ego)
        .iter()
        .map(|raster| patchify(&raster.grid))
        .collect()
}

fn sample_from_frames(
    frames: &[Frame],
    idx: usize,
    episode: usize,
    spec: &expertdrive_sim::ScenarioSpec,
) -> Result<TrainSample> {
    let frame = &frames[idx];
    if frame.view_label < 0 {
        return Err(PolicyError::MissingLabels { what: "camera view".into() });
    }
    if frame.skill_label < 0 {
        return Err(PolicyError::MissingLabels { what: "skill".into() });
    }
    let views = patchified_views(frame, spec);
    let prev_idx = idx.saturating_sub(PREV_FRAME_LAG_TICKS);
    let front_prev = if prev_idx == idx {
        views[0].clone()
    } else {
        patchified_views(&frames[prev_idx], spec)
            .into_iter()
            .next()
            .expect("front view present")
    };
    Ok(TrainSample {
        views,
        front_prev,
        state: encode_state(&frame.ego, &frame.history),
        goal: encode_goal(&frame.goal),
        future: frame.future,
        view_label: frame.view_label as usize,
        skill_label: frame.skill_label as usize,
        episode,
    })
}

/// Render every `stride`-th frame of every episode into a training
/// sample. Fails if any selected frame is missing its annotations.
pub fn samples_from_dataset(dataset: &Dataset, stride: usize) -> Result<Vec<TrainSample>> {
    assert!(stride > 0, "stride must be positive");
    if dataset.episodes.is_empty() {
        return Err(PolicyError::EmptyDataset { detail: "dataset holds no episodes".into() });
    }
    let mut samples = Vec::new();
    for (ep_idx, (meta, frames)) in
        dataset.manifest.episodes.iter().zip(&dataset.episodes).enumerate()
    {
        let mut i = 0;
        while i < frames.len() {
            samples.push(sample_from_frames(frames, i, ep_idx, &meta.spec)?);
            i += stride;
        }
    }
    if samples.is_empty() {
        return Err(PolicyError::EmptyDataset { detail: "no frames survived striding".into() });
    }
    Ok(samples)
}

/// Split samples into train and validation sets by episode: the last
/// `val_fraction` of episodes (at least one, when more than one episode
/// exists) go to validation, so every episode's frames stay on one side.
pub fn split_by_episode(
    samples: Vec<TrainSample>,
    n_episodes: usize,
    val_fraction: f64,
) -> (Vec<TrainSample>, Vec<TrainSample>) {
    if n_episodes <= 1 || val_fraction <= 0.0 {
        return (samples, Vec::new());
    }
    let n_val = ((n_episodes as f64 * val_fraction).round() as usize).clamp(1, n_episodes - 1);
    let first_val = n_episodes - n_val;
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for s in samples {
        if s.episode >= first_val {
            val.push(s);
        } else {
            train.push(s);
        }
    }
    (train, val)
}
