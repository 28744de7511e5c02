//! Shared perception backbone: rasterized camera views become patch token
//! rows, a per-view transformer encoder contextualizes them, and the
//! resulting segments — current front view, previous front view, an
//! optional dynamically routed extra view, an ego-state token, and a goal
//! token — are concatenated into the normalized prefix the trajectory
//! decoder cross-attends over.

use expertdrive_numerics::{Array, DetRng, Graph, NodeId, ParamId, ParamStore};
use expertdrive_sim::{
    CameraViewId, EgoRecord, GoalWaypoint, EGO_HISTORY_LEN, NUM_COMMANDS, NUM_VIEWS,
    RASTER_CHANNELS, RASTER_SIZE,
};

use crate::nn::{EncoderBlock, LayerNorm, Linear};

/// Side length of one square patch, in raster cells.
pub const PATCH_SIZE: usize = 8;
/// Patches per view: a 32x32 raster in 8x8 patches gives a 4x4 grid.
pub const PATCHES_PER_VIEW: usize =
    (RASTER_SIZE / PATCH_SIZE) * (RASTER_SIZE / PATCH_SIZE);
/// Features per patch row: all channels of one 8x8 cell block.
pub const PATCH_FEATURES: usize = RASTER_CHANNELS * PATCH_SIZE * PATCH_SIZE;
/// Ego-state features: current record plus history, six numbers each.
pub const STATE_FEATURES: usize = (EGO_HISTORY_LEN + 1) * 6;
/// Goal features: ego-frame offset plus a command one-hot.
pub const GOAL_FEATURES: usize = 2 + NUM_COMMANDS;

/// Turn one channel-major raster grid into a `[PATCHES_PER_VIEW,
/// PATCH_FEATURES]` matrix. Patches scan row-major over the 4x4 patch
/// grid; within a patch, features are ordered channel, then row, then
/// column.
pub fn patchify(grid: &[f64]) -> Array {
    assert_eq!(grid.len(), RASTER_CHANNELS * RASTER_SIZE * RASTER_SIZE, "raster grid size");
    let per_side = RASTER_SIZE / PATCH_SIZE;
    let mut data = Vec::with_capacity(PATCHES_PER_VIEW * PATCH_FEATURES);
    for patch_row in 0..per_side {
        for patch_col in 0..per_side {
            for ch in 0..RASTER_CHANNELS {
                for r in 0..PATCH_SIZE {
                    let row = patch_row * PATCH_SIZE + r;
                    let base = (ch * RASTER_SIZE + row) * RASTER_SIZE + patch_col * PATCH_SIZE;
                    data.extend_from_slice(&grid[base..base + PATCH_SIZE]);
                }
            }
        }
    }
    Array::from_vec(&[PATCHES_PER_VIEW, PATCH_FEATURES], data).expect("patch shape")
}

/// Encode the ego state (current record plus history, oldest first) as a
/// `[1, STATE_FEATURES]` row. Positions and headings are expressed
/// relative to the current pose so the encoding is translation- and
/// rotation-invariant; speeds and accelerations are scaled to roughly
/// unit range.
pub fn encode_state(current: &EgoRecord, history: &[EgoRecord; EGO_HISTORY_LEN]) -> Array {
    let (c, s) = (current.heading.cos(), current.heading.sin());
    let mut feats = Vec::with_capacity(STATE_FEATURES);
    let mut push = |rec: &EgoRecord| {
        let dx = rec.x - current.x;
        let dy = rec.y - current.y;
        let rel_x = dx * c + dy * s;
        let rel_y = -dx * s + dy * c;
        let dh = rec.heading - current.heading;
        feats.push(rel_x / 10.0);
        feats.push(rel_y / 10.0);
        feats.push(dh.cos());
        feats.push(dh.sin());
        feats.push(rec.speed / 10.0);
        feats.push(rec.accel / 5.0);
    };
    for rec in history {
        push(rec);
    }
    push(current);
    Array::row(&feats)
}

/// Encode the goal waypoint as a `[1, GOAL_FEATURES]` row: scaled
/// ego-frame offset plus a one-hot maneuver command.
pub fn encode_goal(goal: &GoalWaypoint) -> Array {
    let mut feats = vec![0.0; GOAL_FEATURES];
    feats[0] = goal.x / 20.0;
    feats[1] = goal.y / 20.0;
    feats[2 + goal.command.index()] = 1.0;
    Array::row(&feats)
}

/// Patch projection plus a small transformer shared by every camera view.
#[derive(Debug, Clone)]
pub struct ViewEncoder {
    pub proj: Linear,
    /// Learned positional row per patch, `[PATCHES_PER_VIEW, d]`.
    pub patch_pos: ParamId,
    pub blocks: Vec<EncoderBlock>,
}

impl ViewEncoder {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut DetRng,
        name: &str,
        d: usize,
        d_ff: usize,
        n_blocks: usize,
    ) -> Self {
        let proj = Linear::new(store, rng, &format!("{name}.proj"), PATCH_FEATURES, d);
        let patch_pos = store.add_normal(format!("{name}.patch_pos"), PATCHES_PER_VIEW, d, rng);
        let blocks = (0..n_blocks)
            .map(|i| EncoderBlock::new(store, rng, &format!("{name}.block{i}"), d, d_ff))
            .collect();
        Self { proj, patch_pos, blocks }
    }

    /// Encode one patchified view `[PATCHES_PER_VIEW, PATCH_FEATURES]`
    /// into contextual tokens `[PATCHES_PER_VIEW, d]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, patches: NodeId) -> NodeId {
        let pos = g.param(store, self.patch_pos);
        let mut x = self.proj.forward(g, store, patches);
        x = g.add(x, pos);
        for block in &self.blocks {
            x = block.forward(g, store, x);
        }
        x
    }
}

/// Which segment a camera view occupies in the prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewSlot {
    /// Front view at the current tick.
    Front,
    /// Front view from the previous keyframe.
    FrontPrev,
    /// The dynamically routed extra view.
    Dynamic(CameraViewId),
}

/// Raw per-frame inputs to the backbone, already patchified.
#[derive(Debug)]
pub struct PrefixInputs {
    /// Front view at the current tick, `[PATCHES_PER_VIEW, PATCH_FEATURES]`.
    pub front: Array,
    /// Front view from the previous keyframe.
    pub front_prev: Array,
    /// Routed extra view and its identity, absent in the dense baseline.
    pub dynamic: Option<(CameraViewId, Array)>,
    /// Ego-state features `[1, STATE_FEATURES]`.
    pub state: Array,
    /// Goal features `[1, GOAL_FEATURES]`.
    pub goal: Array,
}

/// The assembled prefix along with intermediate values other stages need.
#[derive(Debug, Clone, Copy)]
pub struct PrefixOutput {
    /// Normalized prefix tokens `[n_tokens, d]`.
    pub prefix: NodeId,
    /// Mean-pooled front-view tokens `[1, d]`, the vision router input.
    pub front_pooled: NodeId,
    /// Goal-feature constant node `[1, GOAL_FEATURES]`.
    pub goal: NodeId,
}

/// The full perception backbone.
#[derive(Debug, Clone)]
pub struct Backbone {
    pub view_encoder: ViewEncoder,
    /// Learned identity row per camera view, added to that view's tokens.
    pub view_embed: Vec<ParamId>,
    /// Learned row marking previous-keyframe tokens.
    pub temporal_embed: ParamId,
    pub state_l1: Linear,
    pub state_l2: Linear,
    pub goal_proj: Linear,
    pub prefix_ln: LayerNorm,
}

impl Backbone {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut DetRng,
        d: usize,
        d_ff: usize,
        encoder_blocks: usize,
    ) -> Self {
        let view_encoder =
            ViewEncoder::new(store, rng, "backbone.view_encoder", d, d_ff, encoder_blocks);
        let view_embed = (0..NUM_VIEWS)
            .map(|i| store.add_normal(format!("backbone.view_embed{i}"), 1, d, rng))
            .collect();
        let temporal_embed = store.add_normal("backbone.temporal_embed", 1, d, rng);
        let state_l1 = Linear::new(store, rng, "backbone.state_l1", STATE_FEATURES, d);
        let state_l2 = Linear::new(store, rng, "backbone.state_l2", d, d);
        let goal_proj = Linear::new(store, rng, "backbone.goal_proj", GOAL_FEATURES, d);
        let prefix_ln = LayerNorm::new(store, "backbone.prefix_ln", d);
        Self { view_encoder, view_embed, temporal_embed, state_l1, state_l2, goal_proj, prefix_ln }
    }

    /// Encode one view's patches and stamp its identity (and, for the
    /// previous keyframe, the temporal marker) onto every token.
    pub fn encode_view(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        patches: &Array,
        slot: ViewSlot,
    ) -> NodeId {
        let input = g.constant(patches.clone());
        let tokens = self.view_encoder.forward(g, store, input);
        let view = match slot {
            ViewSlot::Front | ViewSlot::FrontPrev => CameraViewId::Front,
            ViewSlot::Dynamic(v) => v,
        };
        let id_row = g.param(store, self.view_embed[view.index()]);
        let mut tokens = g.add_row(tokens, id_row);
        if slot == ViewSlot::FrontPrev {
            let temporal = g.param(store, self.temporal_embed);
            tokens = g.add_row(tokens, temporal);
        }
        tokens
    }

    /// Encode the ego-state features into a single token.
    pub fn encode_state_token(&self, g: &mut Graph, store: &ParamStore, state: NodeId) -> NodeId {
        let h = self.state_l1.forward(g, store, state);
        let h = g.tanh(h);
        self.state_l2.forward(g, store, h)
    }

    /// Concatenate already-encoded camera segments with the state and
    /// goal tokens and normalize. `dynamic_tokens` is absent in the dense
    /// baseline.
    pub fn build_prefix(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        front_tokens: NodeId,
        prev_tokens: NodeId,
        dynamic_tokens: Option<NodeId>,
        state: &Array,
        goal: NodeId,
    ) -> NodeId {
        let state = g.constant(state.clone());
        let state_token = self.encode_state_token(g, store, state);
        let goal_token = self.goal_proj.forward(g, store, goal);

        let mut segments = vec![front_tokens, prev_tokens];
        if let Some(tokens) = dynamic_tokens {
            segments.push(tokens);
        }
        segments.push(state_token);
        segments.push(goal_token);

        let stacked = g.concat_rows(&segments);
        self.prefix_ln.forward(g, store, stacked)
    }

    /// Assemble the decoder prefix in one call when the dynamic view is
    /// already decided. With a dynamic view the prefix is
    /// `3 * PATCHES_PER_VIEW + 2` tokens; the dense baseline omits the
    /// dynamic segment.
    pub fn assemble_prefix(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        inputs: &PrefixInputs,
    ) -> PrefixOutput {
        let front_tokens = self.encode_view(g, store, &inputs.front, ViewSlot::Front);
        let front_pooled = g.mean_rows(front_tokens);
        let prev_tokens = self.encode_view(g, store, &inputs.front_prev, ViewSlot::FrontPrev);
        let goal = g.constant(inputs.goal.clone());
        let dynamic_tokens = inputs
            .dynamic
            .as_ref()
            .map(|(view, patches)| self.encode_view(g, store, patches, ViewSlot::Dynamic(*view)));
        let prefix = self.build_prefix(
            g,
            store,
            front_tokens,
            prev_tokens,
            dynamic_tokens,
            &inputs.state,
            goal,
        );
        PrefixOutput { prefix, front_pooled, goal }
    }
}
