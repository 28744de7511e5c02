//! Small reusable network layers recorded onto a [`Graph`]: linear maps,
//! layer normalization, tanh feed-forward blocks, and single-head scaled
//! dot-product attention.

use expertdrive_numerics::{DetRng, Graph, NodeId, ParamId, ParamStore};

/// Numerical stabilizer inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Affine map `x @ w + b` with `w: [d_in, d_out]`, `b: [1, d_out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    /// Register weights under `<name>.w` / `<name>.b`.
    pub fn new(
        store: &mut ParamStore,
        rng: &mut DetRng,
        name: &str,
        d_in: usize,
        d_out: usize,
    ) -> Self {
        Self {
            w: store.add_normal(format!("{name}.w"), d_in, d_out, rng),
            b: store.add_zeros(format!("{name}.b"), 1, d_out),
        }
    }

    /// Apply to a `[t, d_in]` node, yielding `[t, d_out]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> NodeId {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }
}

/// Learned per-feature gain and bias around row standardization.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, d: usize) -> Self {
        let gain = store.add(format!("{name}.gain"), expertdrive_numerics::Array::full(&[1, d], 1.0));
        let bias = store.add_zeros(format!("{name}.bias"), 1, d);
        Self { gain, bias }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> NodeId {
        let gain = g.param(store, self.gain);
        let bias = g.param(store, self.bias);
        g.layer_norm(x, gain, bias, LAYER_NORM_EPS)
    }
}

/// Two-layer tanh feed-forward block `d -> d_ff -> d`.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub l1: Linear,
    pub l2: Linear,
}

impl FeedForward {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut DetRng,
        name: &str,
        d: usize,
        d_ff: usize,
    ) -> Self {
        Self {
            l1: Linear::new(store, rng, &format!("{name}.l1"), d, d_ff),
            l2: Linear::new(store, rng, &format!("{name}.l2"), d_ff, d),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> NodeId {
        let h = self.l1.forward(g, store, x);
        let h = g.tanh(h);
        self.l2.forward(g, store, h)
    }
}

/// Scaled dot-product attention: `softmax(q k^T / sqrt(d)) v`.
///
/// Single-head; `q: [tq, d]`, `k`/`v`: `[tk, d]`.
pub fn attention(g: &mut Graph, q: NodeId, k: NodeId, v: NodeId) -> NodeId {
    let d = g.value(q).cols() as f64;
    let scores = g.matmul_nt(q, k);
    let scores = g.scale(scores, 1.0 / d.sqrt());
    let probs = g.softmax_rows(scores);
    g.matmul(probs, v)
}

/// Query/key/value/output projections for one attention sublayer.
#[derive(Debug, Clone)]
pub struct AttentionWeights {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
}

impl AttentionWeights {
    pub fn new(store: &mut ParamStore, rng: &mut DetRng, name: &str, d: usize) -> Self {
        Self {
            wq: Linear::new(store, rng, &format!("{name}.wq"), d, d),
            wk: Linear::new(store, rng, &format!("{name}.wk"), d, d),
            wv: Linear::new(store, rng, &format!("{name}.wv"), d, d),
            wo: Linear::new(store, rng, &format!("{name}.wo"), d, d),
        }
    }

    /// Full attention sublayer from a normalized query input over a
    /// (possibly different) key/value source.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        query_src: NodeId,
        kv_src: NodeId,
    ) -> NodeId {
        let q = self.wq.forward(g, store, query_src);
        let k = self.wk.forward(g, store, kv_src);
        let v = self.wv.forward(g, store, kv_src);
        let mixed = attention(g, q, k, v);
        self.wo.forward(g, store, mixed)
    }

    /// Attention with precomputed key/value arrays (prefix caching): only the
    /// query side is recorded against live parameters.
    pub fn forward_cached(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        query_src: NodeId,
        k: NodeId,
        v: NodeId,
    ) -> NodeId {
        let q = self.wq.forward(g, store, query_src);
        let mixed = attention(g, q, k, v);
        self.wo.forward(g, store, mixed)
    }
}

/// Pre-norm transformer encoder block: self-attention then feed-forward,
/// each behind a residual connection.
#[derive(Debug, Clone)]
pub struct EncoderBlock {
    pub ln1: LayerNorm,
    pub attn: AttentionWeights,
    pub ln2: LayerNorm,
    pub ffn: FeedForward,
}

impl EncoderBlock {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut DetRng,
        name: &str,
        d: usize,
        d_ff: usize,
    ) -> Self {
        Self {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), d),
            attn: AttentionWeights::new(store, rng, &format!("{name}.attn"), d),
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), d),
            ffn: FeedForward::new(store, rng, &format!("{name}.ffn"), d, d_ff),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> NodeId {
        let h = self.ln1.forward(g, store, x);
        let sa = self.attn.forward(g, store, h, h);
        let x = g.add(x, sa);
        let h = self.ln2.forward(g, store, x);
        let ff = self.ffn.forward(g, store, h);
        g.add(x, ff)
    }
}
