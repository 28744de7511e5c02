//! The full driving model: perception backbone, camera-view router, and a
//! flow-matching trajectory decoder whose feed-forward sublayers are
//! either a dense block (baseline) or the skill-expert mixture. One
//! forward pass predicts the straight-path velocity field for a noised
//! trajectory conditioned on the scene prefix; sampling integrates that
//! field from fresh noise.

use expertdrive_numerics::{Array, DetRng, Graph, NodeId, ParamId, ParamStore, Precision};
use expertdrive_sim::{CameraViewId, NUM_VIEWS, TRAJECTORY_LEN};
use serde::{Deserialize, Serialize};

use crate::action_moe::{
    action_router_loss, load_balance_loss, moe_ffn_forward, route_experts, weighted_sum,
    ActionRouter, ExpertBank, Gate, RouterEval, ACTION_TOP_K, NUM_ACTION_EXPERTS,
};
use crate::backbone::{Backbone, ViewSlot, GOAL_FEATURES, STATE_FEATURES};
use crate::error::{PolicyError, Result};
use crate::nn::{AttentionWeights, FeedForward, LayerNorm, Linear};
use crate::planner::{draw_flow_start, flow_matching_loss, integrate_flow};
use crate::vision_moe::{select_view, vision_router_loss, VisionRouter};

/// Dimensionality of the per-step time features fed to the decoder.
pub const TAU_FEATURES: usize = 5;

/// Architecture and loss hyperparameters. The same struct describes both
/// the expert-routed model and the dense baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Token width.
    pub d_model: usize,
    /// Feed-forward hidden width (dense blocks and experts alike).
    pub d_ff: usize,
    /// Transformer blocks in the per-view encoder.
    pub encoder_blocks: usize,
    /// Blocks in the trajectory decoder.
    pub decoder_blocks: usize,
    /// Hidden width of both routers.
    pub router_hidden: usize,
    /// Routed experts per decoder layer.
    pub num_action_experts: usize,
    /// Experts that fire per forward pass.
    pub action_top_k: usize,
    /// Stddev of the additive exploration noise on router logits.
    pub router_noise_std: f64,
    /// Euler steps when sampling a trajectory.
    pub flow_steps: usize,
    /// Route a dynamic camera view into the prefix.
    pub use_vision_moe: bool,
    /// Use the skill-expert mixture in the decoder.
    pub use_action_moe: bool,
}

impl ModelConfig {
    /// The expert-routed configuration.
    pub fn standard() -> Self {
        Self {
            d_model: 64,
            d_ff: 128,
            encoder_blocks: 2,
            decoder_blocks: 4,
            router_hidden: 64,
            num_action_experts: NUM_ACTION_EXPERTS,
            action_top_k: ACTION_TOP_K,
            router_noise_std: 0.1,
            flow_steps: 10,
            use_vision_moe: true,
            use_action_moe: true,
        }
    }

    /// Dense baseline: same backbone and decoder capacity layout, no
    /// routing anywhere.
    pub fn dense() -> Self {
        Self { use_vision_moe: false, use_action_moe: false, ..Self::standard() }
    }

    /// Number of prefix tokens this configuration produces.
    pub fn prefix_tokens(&self) -> usize {
        let views = if self.use_vision_moe { 3 } else { 2 };
        views * crate::backbone::PATCHES_PER_VIEW + 2
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::standard()
    }
}

/// Loss-term weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Flow-matching regression.
    pub flow: f64,
    /// Skill-router cross-entropy.
    pub action: f64,
    /// View-router cross-entropy.
    pub vision: f64,
    /// Load-balance penalty.
    pub balance: f64,
}

impl LossWeights {
    /// Weights used during teacher-forced training.
    pub fn stage1() -> Self {
        Self { flow: 1.0, action: 0.03, vision: 0.05, balance: 0.01 }
    }

    /// Weights used once routing goes live.
    pub fn stage2() -> Self {
        Self { flow: 1.0, action: 0.025, vision: 0.05, balance: 0.01 }
    }
}

/// The feed-forward sublayer of one decoder block.
#[derive(Debug, Clone)]
pub enum DecoderFfn {
    Dense(FeedForward),
    Experts { bank: ExpertBank, router: ActionRouter },
}

/// One decoder block: self-attention over the action tokens,
/// cross-attention into the prefix, then the feed-forward sublayer.
#[derive(Debug, Clone)]
pub struct DecoderBlock {
    pub ln1: LayerNorm,
    pub self_attn: AttentionWeights,
    pub ln2: LayerNorm,
    pub cross_attn: AttentionWeights,
    pub ln3: LayerNorm,
    pub ffn: DecoderFfn,
}

impl DecoderBlock {
    fn new(
        store: &mut ParamStore,
        rng: &mut DetRng,
        name: &str,
        config: &ModelConfig,
    ) -> Self {
        let d = config.d_model;
        let ffn = if config.use_action_moe {
            DecoderFfn::Experts {
                bank: ExpertBank::new(
                    store,
                    rng,
                    &format!("{name}.moe"),
                    d,
                    config.d_ff,
                    config.num_action_experts,
                ),
                router: ActionRouter::new(
                    store,
                    rng,
                    &format!("{name}.router"),
                    d,
                    config.router_hidden,
                    config.num_action_experts,
                ),
            }
        } else {
            DecoderFfn::Dense(FeedForward::new(store, rng, &format!("{name}.ffn"), d, config.d_ff))
        };
        Self {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), d),
            self_attn: AttentionWeights::new(store, rng, &format!("{name}.self_attn"), d),
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), d),
            cross_attn: AttentionWeights::new(store, rng, &format!("{name}.cross_attn"), d),
            ln3: LayerNorm::new(store, &format!("{name}.ln3"), d),
            ffn,
        }
    }
}

/// Per-frame inputs, already patchified and encoded as feature rows.
#[derive(Debug)]
pub struct ModelInputs<'a> {
    /// All camera views at the current tick, indexed by view id.
    pub views: &'a [Array],
    /// Front view from the previous keyframe.
    pub front_prev: &'a Array,
    /// Ego-state features `[1, STATE_FEATURES]`.
    pub state: &'a Array,
    /// Goal features `[1, GOAL_FEATURES]`.
    pub goal: &'a Array,
}

/// How the dynamic camera view is chosen for this pass.
#[derive(Debug, Clone, Copy)]
pub enum ViewPlan {
    /// No dynamic view (dense baseline).
    None,
    /// Teacher forcing: attach the labeled view.
    Forced(usize),
    /// Router-driven, with optional pre-drawn exploration noise.
    Routed { noise: Option<[f64; NUM_VIEWS]> },
}

/// How the decoder's expert layers are gated for this pass.
#[derive(Debug, Clone, Copy)]
pub enum GateMode<'a> {
    /// Dense feed-forward (baseline).
    Dense,
    /// Teacher forcing toward the labeled skill expert.
    Forced(usize),
    /// Router-driven; `noise[layer]` perturbs that layer's selection.
    Routed { noise: Option<&'a [Vec<f64>]> },
}

/// Result of encoding the scene prefix.
pub struct PrefixPass {
    /// Normalized prefix tokens `[prefix_tokens, d_model]`.
    pub prefix: NodeId,
    /// View-router logits, when the vision mixture is enabled.
    pub vision_logits: Option<NodeId>,
    /// The camera view attached as the dynamic segment.
    pub chosen_view: Option<CameraViewId>,
}

/// Result of one decoder pass.
pub struct DecodePass {
    /// Predicted velocity field `[TRAJECTORY_LEN, 2]`.
    pub velocity: NodeId,
    /// Per-layer routing evaluations (empty for the dense decoder).
    pub layer_evals: Vec<RouterEval>,
}

/// Cross-attention source for the decoder.
pub enum PrefixSource<'a> {
    /// Live graph node (training).
    Node(NodeId),
    /// Precomputed per-block key/value arrays (sampling).
    Cached(&'a PrefixCache),
}

/// Frozen prefix state reused across Euler steps of one plan.
#[derive(Debug, Clone)]
pub struct PrefixCache {
    /// Per-block cross-attention keys and values, `[prefix_tokens, d]`.
    pub per_block: Vec<(Array, Array)>,
    /// The camera view the router attached, if any.
    pub chosen_view: Option<CameraViewId>,
    /// Clean view-router probabilities, for diagnostics.
    pub vision_probs: Option<Vec<f64>>,
}

/// All learned components.
#[derive(Debug, Clone)]
pub struct DriveModel {
    pub config: ModelConfig,
    pub backbone: Backbone,
    pub vision_router: Option<VisionRouter>,
    /// Input projection of noised waypoints, `2 -> d`.
    pub traj_in: Linear,
    /// Learned positional row per waypoint slot.
    pub waypoint_pos: ParamId,
    /// Projection of the integration-time features, `TAU_FEATURES -> d`.
    pub tau_proj: Linear,
    pub blocks: Vec<DecoderBlock>,
    pub final_ln: LayerNorm,
    /// Output head `d -> 2`.
    pub head: Linear,
}

impl DriveModel {
    pub fn new(config: ModelConfig, store: &mut ParamStore, rng: &mut DetRng) -> Self {
        let d = config.d_model;
        let backbone = Backbone::new(store, rng, d, config.d_ff, config.encoder_blocks);
        let vision_router = config
            .use_vision_moe
            .then(|| VisionRouter::new(store, rng, d, GOAL_FEATURES, config.router_hidden));
        let traj_in = Linear::new(store, rng, "decoder.traj_in", 2, d);
        let waypoint_pos = store.add_normal("decoder.waypoint_pos", TRAJECTORY_LEN, d, rng);
        let tau_proj = Linear::new(store, rng, "decoder.tau_proj", TAU_FEATURES, d);
        let blocks = (0..config.decoder_blocks)
            .map(|i| DecoderBlock::new(store, rng, &format!("decoder.block{i}"), &config))
            .collect();
        let final_ln = LayerNorm::new(store, "decoder.final_ln", d);
        let head = Linear::new(store, rng, "decoder.head", d, 2);
        Self {
            config,
            backbone,
            vision_router,
            traj_in,
            waypoint_pos,
            tau_proj,
            blocks,
            final_ln,
            head,
        }
    }

    /// Encode the scene prefix, choosing the dynamic view per `plan`.
    pub fn prefix_pass(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        inputs: &ModelInputs<'_>,
        plan: ViewPlan,
    ) -> Result<PrefixPass> {
        self.validate_inputs(inputs)?;
        let front_patches = &inputs.views[CameraViewId::Front.index()];
        let front_tokens = self.backbone.encode_view(g, store, front_patches, ViewSlot::Front);
        let front_pooled = g.mean_rows(front_tokens);
        let prev_tokens =
            self.backbone.encode_view(g, store, inputs.front_prev, ViewSlot::FrontPrev);
        let goal = g.constant(inputs.goal.clone());

        let (vision_logits, chosen_view) = match (plan, &self.vision_router) {
            (ViewPlan::None, _) => (None, None),
            (ViewPlan::Forced(label), Some(router)) => {
                if label >= NUM_VIEWS {
                    return Err(PolicyError::LabelOutOfRange { label, upper: NUM_VIEWS });
                }
                let logits = router.logits(g, store, front_pooled, goal);
                (Some(logits), Some(CameraViewId::from_index(label)))
            }
            (ViewPlan::Routed { noise }, Some(router)) => {
                let logits = router.logits(g, store, front_pooled, goal);
                let view = select_view(g.value(logits), noise.as_ref().map(|n| n.as_slice()));
                (Some(logits), Some(view))
            }
            (_, None) => {
                return Err(PolicyError::ShapeMismatch {
                    expected: "a view-routing model".into(),
                    got: "dense model asked to route views".into(),
                })
            }
        };

        let dynamic_tokens = chosen_view.map(|view| {
            self.backbone.encode_view(g, store, &inputs.views[view.index()], ViewSlot::Dynamic(view))
        });
        let prefix = self.backbone.build_prefix(
            g,
            store,
            front_tokens,
            prev_tokens,
            dynamic_tokens,
            inputs.state,
            goal,
        );
        Ok(PrefixPass { prefix, vision_logits, chosen_view })
    }

    fn validate_inputs(&self, inputs: &ModelInputs<'_>) -> Result<()> {
        if inputs.views.len() != NUM_VIEWS {
            return Err(PolicyError::ShapeMismatch {
                expected: format!("{NUM_VIEWS} camera views"),
                got: format!("{}", inputs.views.len()),
            });
        }
        if inputs.state.shape() != [1, STATE_FEATURES] || inputs.goal.shape() != [1, GOAL_FEATURES]
        {
            return Err(PolicyError::ShapeMismatch {
                expected: format!("state [1,{STATE_FEATURES}], goal [1,{GOAL_FEATURES}]"),
                got: format!("{:?} / {:?}", inputs.state.shape(), inputs.goal.shape()),
            });
        }
        Ok(())
    }

    /// Fourier-style features of the integration time.
    fn tau_features(tau: f64) -> Array {
        use std::f64::consts::PI;
        Array::row(&[
            tau,
            (PI * tau).sin(),
            (PI * tau).cos(),
            (2.0 * PI * tau).sin(),
            (2.0 * PI * tau).cos(),
        ])
    }

    /// One decoder pass over noised waypoints `x_tau: [TRAJECTORY_LEN, 2]`.
    pub fn decode_pass(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        prefix: PrefixSource<'_>,
        x_tau: &Array,
        tau: f64,
        gate: GateMode<'_>,
    ) -> Result<DecodePass> {
        if x_tau.shape() != [TRAJECTORY_LEN, 2] {
            return Err(PolicyError::ShapeMismatch {
                expected: format!("[{TRAJECTORY_LEN}, 2]"),
                got: format!("{:?}", x_tau.shape()),
            });
        }
        if let GateMode::Routed { noise: Some(rows) } = gate {
            if rows.len() != self.blocks.len() {
                return Err(PolicyError::ShapeMismatch {
                    expected: format!("{} noise rows", self.blocks.len()),
                    got: format!("{}", rows.len()),
                });
            }
        }

        let x_in = g.constant(x_tau.clone());
        let mut x = self.traj_in.forward(g, store, x_in);
        let pos = g.param(store, self.waypoint_pos);
        x = g.add(x, pos);
        let tau_row = g.constant(Self::tau_features(tau));
        let tau_embed = self.tau_proj.forward(g, store, tau_row);
        x = g.add_row(x, tau_embed);

        let mut layer_evals = Vec::new();
        for (i, block) in self.blocks.iter().enumerate() {
            let h = block.ln1.forward(g, store, x);
            let sa = block.self_attn.forward(g, store, h, h);
            x = g.add(x, sa);

            let h = block.ln2.forward(g, store, x);
            let ca = match prefix {
                PrefixSource::Node(p) => block.cross_attn.forward(g, store, h, p),
                PrefixSource::Cached(cache) => {
                    let (k, v) = &cache.per_block[i];
                    let k = g.constant(k.clone());
                    let v = g.constant(v.clone());
                    block.cross_attn.forward_cached(g, store, h, k, v)
                }
            };
            x = g.add(x, ca);

            let h = block.ln3.forward(g, store, x);
            let ff = match (&block.ffn, gate) {
                (DecoderFfn::Dense(ffn), GateMode::Dense) => ffn.forward(g, store, h),
                (DecoderFfn::Experts { bank, router }, GateMode::Forced(label)) => {
                    let pooled = g.mean_rows(h);
                    let eval = route_experts(
                        g,
                        store,
                        router,
                        pooled,
                        None,
                        self.config.action_top_k,
                    );
                    layer_evals.push(eval);
                    moe_ffn_forward(g, store, bank, h, Gate::Forced(label))?
                }
                (DecoderFfn::Experts { bank, router }, GateMode::Routed { noise }) => {
                    let pooled = g.mean_rows(h);
                    let eval = route_experts(
                        g,
                        store,
                        router,
                        pooled,
                        noise.map(|rows| rows[i].as_slice()),
                        self.config.action_top_k,
                    );
                    let out = moe_ffn_forward(g, store, bank, h, Gate::Routed(&eval))?;
                    layer_evals.push(eval);
                    out
                }
                (DecoderFfn::Dense(_), _) | (DecoderFfn::Experts { .. }, GateMode::Dense) => {
                    return Err(PolicyError::ShapeMismatch {
                        expected: "gate mode matching the decoder variant".into(),
                        got: "mismatched gate mode".into(),
                    })
                }
            };
            x = g.add(x, ff);
        }

        let h = self.final_ln.forward(g, store, x);
        let velocity = self.head.forward(g, store, h);
        Ok(DecodePass { velocity, layer_evals })
    }

    /// Encode the prefix once on an inference graph and freeze each
    /// block's cross-attention keys and values for reuse across Euler
    /// steps.
    pub fn build_prefix_cache(
        &self,
        store: &ParamStore,
        inputs: &ModelInputs<'_>,
        plan: ViewPlan,
    ) -> Result<PrefixCache> {
        let mut g = Graph::inference(Precision::Double);
        let pass = self.prefix_pass(&mut g, store, inputs, plan)?;
        let vision_probs = pass.vision_logits.map(|logits| {
            let probs = g.softmax_rows(logits);
            g.value(probs).data().to_vec()
        });
        let mut per_block = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let k = block.cross_attn.wk.forward(&mut g, store, pass.prefix);
            let v = block.cross_attn.wv.forward(&mut g, store, pass.prefix);
            per_block.push((g.value(k).clone(), g.value(v).clone()));
        }
        Ok(PrefixCache { per_block, chosen_view: pass.chosen_view, vision_probs })
    }

    /// Sample one normalized trajectory by integrating the velocity field
    /// from Gaussian noise. Routing is clean (no exploration noise).
    pub fn sample_plan(
        &self,
        store: &ParamStore,
        cache: &PrefixCache,
        rng: &mut DetRng,
    ) -> Result<Array> {
        let x0 = draw_flow_start(rng);
        self.integrate_from(store, cache, x0)
    }

    /// Integrate the learned field from a given starting point.
    pub fn integrate_from(
        &self,
        store: &ParamStore,
        cache: &PrefixCache,
        x0: Array,
    ) -> Result<Array> {
        let gate_template = if self.config.use_action_moe {
            GateMode::Routed { noise: None }
        } else {
            GateMode::Dense
        };
        integrate_flow(
            |x, tau| {
                let mut g = Graph::inference(Precision::Double);
                let pass = self.decode_pass(
                    &mut g,
                    store,
                    PrefixSource::Cached(cache),
                    x,
                    tau,
                    gate_template,
                )?;
                Ok(g.value(pass.velocity).clone())
            },
            x0,
            self.config.flow_steps,
        )
    }
}

/// Scalar values of every loss term for one sample, plus the combined
/// training node.
pub struct SampleLosses {
    /// Weighted total, the node to backpropagate.
    pub total: NodeId,
    /// Unweighted flow-matching term.
    pub flow: NodeId,
    /// Unweighted skill-router cross-entropy, absent on the dense model.
    pub action_ce: Option<NodeId>,
    /// View-router cross-entropy with its weight folded in, absent on the
    /// dense model.
    pub vision_ce: Option<NodeId>,
    /// Unweighted load-balance term, present when `balance_f` was given.
    pub balance: Option<NodeId>,
    /// Per-layer routing evaluations from the decode pass.
    pub layer_evals: Vec<RouterEval>,
    /// The camera view attached to the prefix, if any.
    pub chosen_view: Option<CameraViewId>,
    /// Clean view-router logits, when the vision mixture ran.
    pub vision_logits: Option<NodeId>,
}

/// Everything `DriveModel::sample_losses` needs beyond the raw inputs.
pub struct LossPlan<'a> {
    /// Dynamic-view choice.
    pub view: ViewPlan,
    /// Expert gating.
    pub gate: GateMode<'a>,
    /// View label for the vision cross-entropy; `None` skips the term.
    pub view_label: Option<usize>,
    /// Skill label for the action cross-entropy; `None` skips the term.
    pub skill_label: Option<usize>,
    /// Batch routing fractions for the load-balance penalty, one row per
    /// decoder layer; `None` skips the term.
    pub balance_f: Option<&'a [Vec<f64>]>,
    /// Term weights.
    pub weights: LossWeights,
}

impl DriveModel {
    /// Build the weighted training loss for one sample on graph `g`.
    pub fn sample_losses(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        inputs: &ModelInputs<'_>,
        x_tau: &Array,
        tau: f64,
        flow_target: &Array,
        plan: &LossPlan<'_>,
    ) -> Result<SampleLosses> {
        let prefix = self.prefix_pass(g, store, inputs, plan.view)?;
        let decode =
            self.decode_pass(g, store, PrefixSource::Node(prefix.prefix), x_tau, tau, plan.gate)?;

        let target = g.constant(flow_target.clone());
        let flow = flow_matching_loss(g, decode.velocity, target);
        let mut terms = vec![(flow, plan.weights.flow)];

        let vision_ce = match (prefix.vision_logits, plan.view_label) {
            (Some(logits), Some(label)) => {
                // The view loss node carries its own weight internally.
                Some(vision_router_loss(g, logits, label, plan.weights.vision)?)
            }
            _ => None,
        };
        if let Some(node) = vision_ce {
            terms.push((node, 1.0));
        }

        let action_ce = match plan.skill_label {
            Some(label) if !decode.layer_evals.is_empty() => {
                let probs: Vec<NodeId> =
                    decode.layer_evals.iter().map(|e| e.clean_probs).collect();
                let node = action_router_loss(g, &probs, label)?;
                terms.push((node, plan.weights.action));
                Some(node)
            }
            _ => None,
        };

        let balance = match plan.balance_f {
            Some(f) if !decode.layer_evals.is_empty() => {
                let probs: Vec<NodeId> =
                    decode.layer_evals.iter().map(|e| e.clean_probs).collect();
                let node = load_balance_loss(g, &probs, f);
                terms.push((node, plan.weights.balance));
                Some(node)
            }
            _ => None,
        };

        let total = weighted_sum(g, &terms);
        Ok(SampleLosses {
            total,
            flow,
            action_ce,
            vision_ce,
            balance,
            layer_evals: decode.layer_evals,
            chosen_view: prefix.chosen_view,
            vision_logits: prefix.vision_logits,
        })
    }
}
