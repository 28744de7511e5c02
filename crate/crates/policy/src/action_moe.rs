//! Skill-specialized expert layer for the trajectory decoder: one shared
//! feed-forward expert always runs, a gating network scores six routed
//! experts, the top three fire with renormalized weights, and the rest
//! contribute exactly nothing — no compute, no gradient. Training adds a
//! router cross-entropy toward the annotated skill and a load-balance
//! penalty that discourages expert collapse.

use expertdrive_numerics::{Array, DetRng, Graph, NodeId, ParamStore};

use crate::error::{PolicyError, Result};
use crate::nn::{FeedForward, Linear};
use crate::vision_moe::LOG_PROB_FLOOR;

/// Routed (non-shared) experts per layer.
pub const NUM_ACTION_EXPERTS: usize = 6;
/// Routed experts that fire per token batch.
pub const ACTION_TOP_K: usize = 3;

/// Indices of the `k` largest entries, largest first; ties resolve to the
/// lower index.
pub fn top_k_lower_tie(values: &[f64], k: usize) -> Vec<usize> {
    assert!(k <= values.len(), "k exceeds candidate count");
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b].partial_cmp(&values[a]).expect("finite logits").then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

/// One shared expert plus a bank of routed experts, all `d -> d_ff -> d`
/// tanh feed-forward blocks.
#[derive(Debug, Clone)]
pub struct ExpertBank {
    pub shared: FeedForward,
    pub routed: Vec<FeedForward>,
}

impl ExpertBank {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut DetRng,
        name: &str,
        d: usize,
        d_ff: usize,
        num_experts: usize,
    ) -> Self {
        let shared = FeedForward::new(store, rng, &format!("{name}.shared"), d, d_ff);
        let routed = (0..num_experts)
            .map(|i| FeedForward::new(store, rng, &format!("{name}.expert{i}"), d, d_ff))
            .collect();
        Self { shared, routed }
    }
}

/// Gating network: pooled decoder hidden state to one logit per routed
/// expert, through a tanh hidden layer.
#[derive(Debug, Clone)]
pub struct ActionRouter {
    pub l1: Linear,
    pub l2: Linear,
}

impl ActionRouter {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut DetRng,
        name: &str,
        d: usize,
        hidden: usize,
        num_experts: usize,
    ) -> Self {
        Self {
            l1: Linear::new(store, rng, &format!("{name}.l1"), d, hidden),
            l2: Linear::new(store, rng, &format!("{name}.l2"), hidden, num_experts),
        }
    }

    /// Expert logits `[1, num_experts]` from pooled hidden state `[1, d]`.
    pub fn logits(&self, g: &mut Graph, store: &ParamStore, pooled: NodeId) -> NodeId {
        let h = self.l1.forward(g, store, pooled);
        let h = g.tanh(h);
        self.l2.forward(g, store, h)
    }
}

/// Everything the gating computation produces for one layer.
#[derive(Debug, Clone)]
pub struct RouterEval {
    /// Noise-free softmax over experts, `[1, num_experts]` — feeds the
    /// router cross-entropy and the load-balance penalty.
    pub clean_probs: NodeId,
    /// Softmax over the (possibly noise-perturbed) selection logits.
    pub selection_probs: NodeId,
    /// Experts chosen to fire, strongest first.
    pub selected: Vec<usize>,
    /// Renormalized gate weights over `selected`, `[1, k]`; sums to one.
    pub weights: NodeId,
}

/// Run the gating network and pick the top experts. `noise`, when given,
/// perturbs the selection logits only (exploration during training); the
/// clean probabilities are always noise-free.
pub fn route_experts(
    g: &mut Graph,
    store: &ParamStore,
    router: &ActionRouter,
    pooled: NodeId,
    noise: Option<&[f64]>,
    k: usize,
) -> RouterEval {
    let logits = router.logits(g, store, pooled);
    let clean_probs = g.softmax_rows(logits);
    let selection_logits = match noise {
        Some(eps) => {
            let eps_row = g.constant(Array::row(eps));
            g.add(logits, eps_row)
        }
        None => logits,
    };
    let selection_probs = g.softmax_rows(selection_logits);
    let selected = top_k_lower_tie(g.value(selection_logits).data(), k);
    let gathered = g.gather_cols(selection_probs, &selected);
    let total = g.sum_all(gathered);
    let weights = g.div_by_scalar(gathered, total);
    RouterEval { clean_probs, selection_probs, selected, weights }
}

/// How the expert layer combines experts for the current sample.
#[derive(Debug, Clone, Copy)]
pub enum Gate<'a> {
    /// Teacher forcing: exactly the labeled expert fires, weight one, and
    /// the gating network receives no gradient through the data path.
    Forced(usize),
    /// Router-driven: the selected experts fire with renormalized gate
    /// weights, which backpropagate into the gating network.
    Routed(&'a RouterEval),
}

/// Apply the expert layer to `x: [t, d]`: shared expert output plus the
/// gated sum of routed expert outputs. Unselected experts are never
/// evaluated, so their parameters receive exactly zero gradient.
pub fn moe_ffn_forward(
    g: &mut Graph,
    store: &ParamStore,
    bank: &ExpertBank,
    x: NodeId,
    gate: Gate<'_>,
) -> Result<NodeId> {
    let mut out = bank.shared.forward(g, store, x);
    match gate {
        Gate::Forced(label) => {
            if label >= bank.routed.len() {
                return Err(PolicyError::LabelOutOfRange { label, upper: bank.routed.len() });
            }
            let expert_out = bank.routed[label].forward(g, store, x);
            out = g.add(out, expert_out);
        }
        Gate::Routed(eval) => {
            for (slot, &idx) in eval.selected.iter().enumerate() {
                let expert_out = bank.routed[idx].forward(g, store, x);
                let w = g.gather_cols(eval.weights, &[slot]);
                let weighted = g.mul_by_scalar(expert_out, w);
                out = g.add(out, weighted);
            }
        }
    }
    Ok(out)
}

/// Router cross-entropy: mean over layers of `-ln p_label` under the
/// clean probabilities. `layer_probs` holds one `[1, num_experts]` node
/// per expert layer.
pub fn action_router_loss(
    g: &mut Graph,
    layer_probs: &[NodeId],
    label: usize,
) -> Result<NodeId> {
    assert!(!layer_probs.is_empty(), "at least one expert layer");
    let mut acc: Option<NodeId> = None;
    for &probs in layer_probs {
        let n = g.value(probs).cols();
        if label >= n {
            return Err(PolicyError::LabelOutOfRange { label, upper: n });
        }
        let picked = g.gather_cols(probs, &[label]);
        let log_p = g.ln_clamped(picked, LOG_PROB_FLOOR);
        let term = g.sum_all(log_p);
        acc = Some(match acc {
            Some(a) => g.add(a, term),
            None => term,
        });
    }
    let total = acc.expect("non-empty");
    Ok(g.scale(total, -1.0 / layer_probs.len() as f64))
}

/// Load-balance penalty for one layer: `K * sum_k f_k * p_k`, where `f`
/// is the (constant) fraction of samples routed to each expert and `p`
/// are this sample's clean probabilities. Uniform routing over `K`
/// experts with top-`k` selection scores `k`; full collapse scores `K`.
pub fn load_balance_term(g: &mut Graph, clean_probs: NodeId, f: &[f64]) -> NodeId {
    let k_ns = f.len() as f64;
    let f_row = g.constant(Array::row(f));
    let prod = g.mul(f_row, clean_probs);
    let sum = g.sum_all(prod);
    g.scale(sum, k_ns)
}

/// Mean of per-layer load-balance terms; `fs[l]` holds the routing
/// fractions observed at layer `l`.
pub fn load_balance_loss(g: &mut Graph, layer_probs: &[NodeId], fs: &[Vec<f64>]) -> NodeId {
    assert!(!layer_probs.is_empty(), "at least one expert layer");
    assert_eq!(layer_probs.len(), fs.len(), "one fraction row per layer");
    let mut acc: Option<NodeId> = None;
    for (&probs, f) in layer_probs.iter().zip(fs) {
        let term = load_balance_term(g, probs, f);
        acc = Some(match acc {
            Some(a) => g.add(a, term),
            None => term,
        });
    }
    let total = acc.expect("non-empty");
    g.scale(total, 1.0 / layer_probs.len() as f64)
}

/// Weighted sum of scalar loss nodes.
pub fn weighted_sum(g: &mut Graph, terms: &[(NodeId, f64)]) -> NodeId {
    assert!(!terms.is_empty(), "at least one loss term");
    let mut acc: Option<NodeId> = None;
    for &(node, w) in terms {
        let scaled = g.scale(node, w);
        acc = Some(match acc {
            Some(a) => g.add(a, scaled),
            None => scaled,
        });
    }
    acc.expect("non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use expertdrive_numerics::{finite_diff_check, Precision};

    /// Set a feed-forward block to compute a constant: zero weights, zero
    /// first bias (tanh(0) = 0), second bias = the constant.
    fn make_constant_expert(store: &mut ParamStore, ff: &FeedForward, value: f64) {
        let d_out = store.get(ff.l2.b).value.cols();
        store.get_mut(ff.l1.w).value.data_mut().fill(0.0);
        store.get_mut(ff.l1.b).value.data_mut().fill(0.0);
        store.get_mut(ff.l2.w).value.data_mut().fill(0.0);
        store.get_mut(ff.l2.b).value = Array::full(&[1, d_out], value);
    }

    #[test]
    fn gated_mixture_matches_hand_computed_value() {
        // Experts pinned to constants: shared -> 2, expert0 -> 1,
        // expert1 -> -1. Gate weights 0.3 / 0.7 give
        // 2 + 0.3*1 + 0.7*(-1) = 1.6 in every output slot.
        let mut store = ParamStore::new();
        let mut rng = DetRng::from_seed(5);
        let bank = ExpertBank::new(&mut store, &mut rng, "bank", 2, 3, 2);
        make_constant_expert(&mut store, &bank.shared, 2.0);
        make_constant_expert(&mut store, &bank.routed[0], 1.0);
        make_constant_expert(&mut store, &bank.routed[1], -1.0);

        let mut g = Graph::new(Precision::Double);
        let x = g.constant(Array::from_fn(3, 2, |r, c| (r + c) as f64));
        // Logits chosen so softmax(top-2 renorm) is exactly [0.3, 0.7]:
        // renormalizing all of a 2-way softmax keeps it unchanged, and
        // logit difference ln(7/3) produces probabilities 0.3 / 0.7.
        let pooled_logits = Array::row(&[0.0, (7.0f64 / 3.0).ln()]);
        let logits = g.constant(pooled_logits);
        let probs = g.softmax_rows(logits);
        let selected = top_k_lower_tie(g.value(logits).data(), 2);
        let gathered = g.gather_cols(probs, &selected);
        let total = g.sum_all(gathered);
        let weights = g.div_by_scalar(gathered, total);
        let eval = RouterEval {
            clean_probs: probs,
            selection_probs: probs,
            selected,
            weights,
        };
        let out = moe_ffn_forward(&mut g, &store, &bank, x, Gate::Routed(&eval)).unwrap();
        for &v in g.value(out).data() {
            assert_relative_eq!(v, 2.0 + 0.3 * 1.0 + 0.7 * -1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn top_k_selection_orders_by_value_then_lower_index() {
        assert_eq!(top_k_lower_tie(&[1.0, 3.0, 2.0, 3.0], 2), vec![1, 3]);
        assert_eq!(top_k_lower_tie(&[5.0, 5.0, 5.0, 5.0], 3), vec![0, 1, 2]);
        assert_eq!(top_k_lower_tie(&[-1.0, -3.0, -2.0], 1), vec![0]);
    }

    #[test]
    fn renormalized_weights_match_closed_form_and_sum_to_one() {
        // Softmax probabilities [0.4, 0.3, 0.2, 0.05, 0.05, 0.0...]-ish
        // are easiest to pin via explicit probability rows: renormalizing
        // the top three of [0.4, 0.3, 0.2, ...] gives [4/9, 3/9, 2/9].
        let mut g = Graph::new(Precision::Double);
        let probs = g.constant(Array::row(&[0.4, 0.3, 0.2, 0.06, 0.03, 0.01]));
        let selected = top_k_lower_tie(g.value(probs).data(), 3);
        assert_eq!(selected, vec![0, 1, 2]);
        let gathered = g.gather_cols(probs, &selected);
        let total = g.sum_all(gathered);
        let weights = g.div_by_scalar(gathered, total);
        let w = g.value(weights);
        assert_relative_eq!(w.at(0, 0), 4.0 / 9.0, epsilon = 1e-12);
        assert_relative_eq!(w.at(0, 1), 3.0 / 9.0, epsilon = 1e-12);
        assert_relative_eq!(w.at(0, 2), 2.0 / 9.0, epsilon = 1e-12);
        let sum: f64 = w.data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-6, "gate weights must sum to one");
    }

    #[test]
    fn unselected_experts_receive_exactly_zero_gradient() {
        let mut store = ParamStore::new();
        let mut rng = DetRng::from_seed(9);
        let d = 4;
        let bank = ExpertBank::new(&mut store, &mut rng, "bank", d, 8, NUM_ACTION_EXPERTS);
        let router = ActionRouter::new(&mut store, &mut rng, "router", d, 8, NUM_ACTION_EXPERTS);

        let mut g = Graph::new(Precision::Double);
        let x = g.constant(Array::from_fn(2, d, |r, c| 0.2 * (r as f64 + 1.0) - 0.1 * c as f64));
        let pooled = g.mean_rows(x);
        let eval = route_experts(&mut g, &store, &router, pooled, None, ACTION_TOP_K);
        let out = moe_ffn_forward(&mut g, &store, &bank, x, Gate::Routed(&eval)).unwrap();
        let sq = g.mul(out, out);
        let loss = g.mean_all(sq);
        g.backprop(loss, &mut store).unwrap();

        for (i, expert) in bank.routed.iter().enumerate() {
            let grads: f64 = [expert.l1.w, expert.l1.b, expert.l2.w, expert.l2.b]
                .iter()
                .map(|&p| store.get(p).grad.data().iter().map(|v| v.abs()).sum::<f64>())
                .sum();
            if eval.selected.contains(&i) {
                assert!(grads > 0.0, "selected expert {i} should train");
            } else {
                assert_eq!(grads, 0.0, "unselected expert {i} must stay untouched");
            }
        }
        // The shared expert always trains.
        let shared_grad: f64 = store.get(bank.shared.l1.w).grad.data().iter().map(|v| v.abs()).sum();
        assert!(shared_grad > 0.0);
    }

    #[test]
    fn forced_gate_trains_only_the_labeled_expert() {
        let mut store = ParamStore::new();
        let mut rng = DetRng::from_seed(13);
        let d = 4;
        let bank = ExpertBank::new(&mut store, &mut rng, "bank", d, 8, NUM_ACTION_EXPERTS);
        let mut g = Graph::new(Precision::Double);
        let x = g.constant(Array::from_fn(2, d, |r, c| 0.1 * (r * 3 + c) as f64));
        let out = moe_ffn_forward(&mut g, &store, &bank, x, Gate::Forced(4)).unwrap();
        let sq = g.mul(out, out);
        let loss = g.mean_all(sq);
        g.backprop(loss, &mut store).unwrap();
        for (i, expert) in bank.routed.iter().enumerate() {
            let grads: f64 = [expert.l1.w, expert.l1.b, expert.l2.w, expert.l2.b]
                .iter()
                .map(|&p| store.get(p).grad.data().iter().map(|v| v.abs()).sum::<f64>())
                .sum();
            if i == 4 {
                assert!(grads > 0.0);
            } else {
                assert_eq!(grads, 0.0);
            }
        }
    }

    #[test]
    fn forced_gate_rejects_out_of_range_label() {
        let mut store = ParamStore::new();
        let mut rng = DetRng::from_seed(2);
        let bank = ExpertBank::new(&mut store, &mut rng, "bank", 2, 4, 3);
        let mut g = Graph::new(Precision::Double);
        let x = g.constant(Array::zeros(&[1, 2]));
        assert!(matches!(
            moe_ffn_forward(&mut g, &store, &bank, x, Gate::Forced(3)),
            Err(PolicyError::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn router_cross_entropy_closed_forms() {
        // Uniform probabilities over six experts: -ln(1/6) = ln 6 per
        // layer, and the mean over layers keeps that value.
        let mut g = Graph::new(Precision::Double);
        let uniform = Array::full(&[1, NUM_ACTION_EXPERTS], 1.0 / NUM_ACTION_EXPERTS as f64);
        let p1 = g.constant(uniform.clone());
        let p2 = g.constant(uniform);
        let loss = action_router_loss(&mut g, &[p1, p2], 3).unwrap();
        assert_relative_eq!(g.scalar(loss), (NUM_ACTION_EXPERTS as f64).ln(), epsilon = 1e-9);

        // Certain-correct layer averaged with a uniform layer halves ln 6.
        let mut g = Graph::new(Precision::Double);
        let mut certain = vec![0.0; NUM_ACTION_EXPERTS];
        certain[3] = 1.0;
        let p1 = g.constant(Array::row(&certain));
        let p2 = g.constant(Array::full(&[1, NUM_ACTION_EXPERTS], 1.0 / 6.0));
        let loss = action_router_loss(&mut g, &[p1, p2], 3).unwrap();
        assert_relative_eq!(g.scalar(loss), 6.0f64.ln() / 2.0, epsilon = 1e-9);
    }

    #[test]
    fn load_balance_closed_forms() {
        // Uniform routing: every expert receives k/K of the samples and
        // probability 1/K, so K * sum(f * p) = K * K * (k/K) * (1/K) = k.
        let k_frac = ACTION_TOP_K as f64 / NUM_ACTION_EXPERTS as f64;
        let f_uniform = vec![k_frac; NUM_ACTION_EXPERTS];
        let mut g = Graph::new(Precision::Double);
        let probs = g.constant(Array::full(&[1, NUM_ACTION_EXPERTS], 1.0 / 6.0));
        let term = load_balance_term(&mut g, probs, &f_uniform);
        assert_relative_eq!(g.scalar(term), ACTION_TOP_K as f64, epsilon = 1e-9);

        // Full collapse onto expert 0: f = [1, 0, ...], p = [1, 0, ...]
        // scores K — the maximum, double the uniform value for top-3.
        let mut f_collapse = vec![0.0; NUM_ACTION_EXPERTS];
        f_collapse[0] = 1.0;
        let mut p_collapse = vec![0.0; NUM_ACTION_EXPERTS];
        p_collapse[0] = 1.0;
        let mut g = Graph::new(Precision::Double);
        let probs = g.constant(Array::row(&p_collapse));
        let term = load_balance_term(&mut g, probs, &f_collapse);
        assert_relative_eq!(g.scalar(term), NUM_ACTION_EXPERTS as f64, epsilon = 1e-9);
    }

    #[test]
    fn weighted_sum_combines_scalar_losses() {
        let mut g = Graph::new(Precision::Double);
        let a = g.constant(Array::scalar(1.0));
        let b = g.constant(Array::scalar(2.0));
        let c = g.constant(Array::scalar(3.0));
        let total = weighted_sum(&mut g, &[(a, 1.0), (b, 0.03), (c, 0.01)]);
        assert_relative_eq!(g.scalar(total), 1.09, epsilon = 1e-12);
    }

    #[test]
    fn routed_mixture_gradients_match_finite_differences() {
        // Full routed path: router -> gate weights -> mixture output.
        // The input sits far from routing ties, so the selection is
        // locally constant and the analytic gradient is exact.
        let mut store = ParamStore::new();
        let mut rng = DetRng::from_seed(21);
        let d = 4;
        let bank = ExpertBank::new(&mut store, &mut rng, "bank", d, 6, 4);
        let router = ActionRouter::new(&mut store, &mut rng, "router", d, 6, 4);
        let x = Array::from_fn(2, d, |r, c| 0.4 * (r as f64 - 0.5) + 0.15 * c as f64);

        // Confirm a healthy margin between the k-th and (k+1)-th logits.
        {
            let mut g = Graph::inference(Precision::Double);
            let xn = g.constant(x.clone());
            let pooled = g.mean_rows(xn);
            let logits = router.logits(&mut g, &store, pooled);
            let mut vals = g.value(logits).data().to_vec();
            vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert!(
                (vals[1] - vals[2]).abs() > 1e-3,
                "fixture too close to a routing tie: {vals:?}"
            );
        }

        let ids: Vec<_> = store.ids().collect();
        let max_rel = finite_diff_check(&mut store, &ids, 1e-4, |g, store| {
            let xn = g.constant(x.clone());
            let pooled = g.mean_rows(xn);
            let eval = route_experts(g, store, &router, pooled, None, 2);
            let out = moe_ffn_forward(g, store, &bank, xn, Gate::Routed(&eval)).unwrap();
            let sq = g.mul(out, out);
            g.mean_all(sq)
        })
        .unwrap();
        assert!(max_rel < 1e-4, "mixture finite-difference mismatch: {max_rel}");
    }

    #[test]
    fn exploration_noise_perturbs_selection_but_not_clean_probs() {
        let mut store = ParamStore::new();
        let mut rng = DetRng::from_seed(31);
        let router = ActionRouter::new(&mut store, &mut rng, "router", 4, 6, 4);
        let x = Array::from_fn(1, 4, |_, c| 0.3 * c as f64);

        let mut g = Graph::new(Precision::Double);
        let xn = g.constant(x.clone());
        let clean = route_experts(&mut g, &store, &router, xn, None, 2);

        // A large noise burst on the last expert forces it into the mix.
        let noise = [0.0, 0.0, 0.0, 50.0];
        let mut g2 = Graph::new(Precision::Double);
        let xn2 = g2.constant(x);
        let noisy = route_experts(&mut g2, &store, &router, xn2, Some(&noise), 2);

        assert_eq!(
            g.value(clean.clean_probs).data(),
            g2.value(noisy.clean_probs).data(),
            "clean probabilities must ignore exploration noise"
        );
        assert!(noisy.selected.contains(&3), "noise should flip the selection");
        assert!(!clean.selected.contains(&3));
    }
}
