//! Camera-view routing: a small gating network reads the pooled front-view
//! features and the goal encoding, produces a logit per camera view, and
//! the top view is attached to the decoder prefix as the dynamic segment.
//! Training supervises the router with a cross-entropy toward the
//! rule-annotated view label.

use expertdrive_numerics::{Array, DetRng, Graph, NodeId, ParamStore};
use expertdrive_sim::{CameraViewId, NUM_VIEWS};

use crate::error::{PolicyError, Result};
use crate::nn::Linear;

/// Floor applied inside `ln` so a zero probability cannot produce an
/// infinite loss.
pub const LOG_PROB_FLOOR: f64 = 1e-12;

/// Gating network over camera views: pooled front features and goal
/// features each project into a shared hidden layer (equivalent to one
/// affine map on their concatenation), then a tanh and an output head
/// produce one logit per view.
#[derive(Debug, Clone)]
pub struct VisionRouter {
    pub from_front: Linear,
    pub from_goal: Linear,
    pub head: Linear,
}

impl VisionRouter {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut DetRng,
        d: usize,
        goal_features: usize,
        hidden: usize,
    ) -> Self {
        Self {
            from_front: Linear::new(store, rng, "vision_router.from_front", d, hidden),
            from_goal: Linear::new(store, rng, "vision_router.from_goal", goal_features, hidden),
            head: Linear::new(store, rng, "vision_router.head", hidden, NUM_VIEWS),
        }
    }

    /// Produce view logits `[1, NUM_VIEWS]` from pooled front features
    /// `[1, d]` and goal features `[1, goal_features]`.
    pub fn logits(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        front_pooled: NodeId,
        goal: NodeId,
    ) -> NodeId {
        let a = self.from_front.forward(g, store, front_pooled);
        let b = self.from_goal.forward(g, store, goal);
        let h = g.add(a, b);
        let h = g.tanh(h);
        self.head.forward(g, store, h)
    }
}

/// Index of the largest entry; ties resolve to the lower index.
pub fn argmax_lower_tie(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Pick the routed camera view from logit values, optionally perturbed by
/// pre-drawn exploration noise (training only).
pub fn select_view(logits: &Array, noise: Option<&[f64]>) -> CameraViewId {
    assert_eq!(logits.len(), NUM_VIEWS, "view logit count");
    let picked = match noise {
        Some(eps) => {
            assert_eq!(eps.len(), NUM_VIEWS, "noise length");
            let perturbed: Vec<f64> =
                logits.data().iter().zip(eps).map(|(l, e)| l + e).collect();
            argmax_lower_tie(&perturbed)
        }
        None => argmax_lower_tie(logits.data()),
    };
    CameraViewId::from_index(picked)
}

/// Weighted negative log-likelihood of the labeled view under the clean
/// (noise-free) softmax: `-weight * ln p(label)`. Returns a scalar node.
pub fn vision_router_loss(
    g: &mut Graph,
    logits: NodeId,
    label: usize,
    weight: f64,
) -> Result<NodeId> {
    if label >= NUM_VIEWS {
        return Err(PolicyError::LabelOutOfRange { label, upper: NUM_VIEWS });
    }
    let probs = g.softmax_rows(logits);
    let picked = g.gather_cols(probs, &[label]);
    let log_p = g.ln_clamped(picked, LOG_PROB_FLOOR);
    let scalar = g.sum_all(log_p);
    Ok(g.scale(scalar, -weight))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use expertdrive_numerics::Precision;

    #[test]
    fn uniform_logits_give_log_num_views_loss() {
        // Six equal logits put probability 1/6 on the label, so the
        // unweighted loss is ln 6 and the weighted loss scales linearly.
        let mut g = Graph::new(Precision::Double);
        let logits = g.constant(Array::zeros(&[1, NUM_VIEWS]));
        let loss = vision_router_loss(&mut g, logits, 2, 1.0).unwrap();
        assert_relative_eq!(g.scalar(loss), (NUM_VIEWS as f64).ln(), epsilon = 1e-12);

        let mut g = Graph::new(Precision::Double);
        let logits = g.constant(Array::zeros(&[1, NUM_VIEWS]));
        let loss = vision_router_loss(&mut g, logits, 2, 0.05).unwrap();
        assert_relative_eq!(g.scalar(loss), 0.05 * (NUM_VIEWS as f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn confident_correct_logits_drive_loss_toward_zero() {
        let mut g = Graph::new(Precision::Double);
        let mut row = vec![-20.0; NUM_VIEWS];
        row[4] = 20.0;
        let logits = g.constant(Array::row(&row));
        let loss = vision_router_loss(&mut g, logits, 4, 1.0).unwrap();
        assert!(g.scalar(loss) < 1e-9, "near-certain label should cost ~0");
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        let mut g = Graph::new(Precision::Double);
        let logits = g.constant(Array::zeros(&[1, NUM_VIEWS]));
        assert!(matches!(
            vision_router_loss(&mut g, logits, NUM_VIEWS, 1.0),
            Err(PolicyError::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn view_selection_breaks_ties_toward_lower_index() {
        let logits = Array::row(&[1.0, 3.0, 3.0, 0.0, 3.0, -1.0]);
        assert_eq!(select_view(&logits, None).index(), 1);

        // Noise can flip the winner.
        let noise = [0.0, 0.0, 0.5, 0.0, 0.0, 0.0];
        assert_eq!(select_view(&logits, Some(&noise)).index(), 2);
    }

    #[test]
    fn router_gradients_match_finite_differences() {
        use expertdrive_numerics::finite_diff_check;
        const GOAL_FEATS: usize = 7;
        let mut store = ParamStore::new();
        let mut rng = DetRng::from_seed(11);
        let router = VisionRouter::new(&mut store, &mut rng, 8, GOAL_FEATS, 8);
        let front = Array::from_fn(1, 8, |_, c| 0.3 * (c as f64 - 3.5));
        let goal = Array::from_fn(1, GOAL_FEATS, |_, c| if c == 3 { 1.0 } else { 0.1 });
        let ids: Vec<_> = store.ids().collect();
        let max_rel = finite_diff_check(&mut store, &ids, 1e-5, |g, store| {
            let f = g.constant(front.clone());
            let q = g.constant(goal.clone());
            let logits = router.logits(g, store, f, q);
            vision_router_loss(g, logits, 1, 0.05).expect("label in range")
        })
        .unwrap();
        assert!(max_rel < 1e-4, "router finite-difference mismatch: {max_rel}");
    }
}
