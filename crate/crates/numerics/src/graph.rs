//! Reverse-mode automatic differentiation on a flat tape.
//!
//! A [`Graph`] records one forward computation as an append-only list of
//! nodes. Values are computed eagerly, so callers can inspect intermediate
//! results (e.g. routing probabilities) while still extending the graph.
//! Because nodes only ever reference earlier nodes, [`Graph::backprop`] is a
//! single reverse sweep over the tape.
//!
//! Every operation checks its output for non-finite values and, in
//! [`Precision::Single`] mode, rounds the result to the f32 grid before
//! storing it.

use std::collections::HashMap;

use crate::array::Array;
use crate::error::{NumericsError, Result};
use crate::params::{ParamId, ParamStore};
use crate::precision::Precision;

/// Handle to one node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Backward rule: given all node values and the output gradient, produce
/// `(parent, contribution)` pairs.
type BackFn = Box<dyn Fn(&[Array], &Array) -> Vec<(NodeId, Array)> + Send>;

/// One recorded forward computation.
pub struct Graph {
    values: Vec<Array>,
    recs: Vec<Option<BackFn>>,
    precision: Precision,
    grad_enabled: bool,
    param_nodes: Vec<(ParamId, NodeId)>,
    param_lookup: HashMap<ParamId, NodeId>,
}

impl Graph {
    /// Fresh graph in the given precision mode, recording backward rules.
    pub fn new(precision: Precision) -> Self {
        Self {
            values: Vec::new(),
            recs: Vec::new(),
            precision,
            grad_enabled: true,
            param_nodes: Vec::new(),
            param_lookup: HashMap::new(),
        }
    }

    /// Forward-only graph: no backward rules are recorded and
    /// [`Graph::backprop`] must not be called. Used on inference paths.
    pub fn inference(precision: Precision) -> Self {
        let mut g = Self::new(precision);
        g.grad_enabled = false;
        g
    }

    /// Precision mode of this graph.
    pub fn precision(&self) -> Precision {
        self.precision
    }

    /// Number of nodes recorded so far.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// True when no nodes have been recorded.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value of a node.
    pub fn value(&self, id: NodeId) -> &Array {
        &self.values[id.0]
    }

    /// Scalar value of a `[1, 1]` node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.values[id.0].scalar_value()
    }

    fn push(&mut self, mut value: Array, rec: Option<BackFn>) -> NodeId {
        value.quantize(self.precision);
        assert!(
            value.all_finite(),
            "non-finite value produced at node {} (shape {:?})",
            self.values.len(),
            value.shape()
        );
        self.values.push(value);
        self.recs.push(if self.grad_enabled { rec } else { None });
        NodeId(self.values.len() - 1)
    }

    /// Insert a constant leaf. No gradient flows into constants.
    pub fn constant(&mut self, value: Array) -> NodeId {
        self.push(value, None)
    }

    /// Insert (or reuse) the leaf node for a parameter.
    ///
    /// Repeated calls with the same id return the same node, so gradient
    /// contributions from every use site accumulate on one leaf.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        if let Some(&node) = self.param_lookup.get(&id) {
            return node;
        }
        let node = self.push(store.get(id).value.clone(), None);
        self.param_nodes.push((id, node));
        self.param_lookup.insert(id, node);
        node
    }

    /// Elementwise sum of two same-shape nodes.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.values[a.0], &self.values[b.0]);
        assert_eq!(
            va.shape(),
            vb.shape(),
            "add shape mismatch: {:?} vs {:?}",
            va.shape(),
            vb.shape()
        );
        let mut out = va.clone();
        out.add_assign(vb);
        self.push(
            out,
            Some(Box::new(move |_vals, g| vec![(a, g.clone()), (b, g.clone())])),
        )
    }

    /// Elementwise difference `a - b` of two same-shape nodes.
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.values[a.0], &self.values[b.0]);
        assert_eq!(
            va.shape(),
            vb.shape(),
            "sub shape mismatch: {:?} vs {:?}",
            va.shape(),
            vb.shape()
        );
        let data: Vec<f64> = va.data().iter().zip(vb.data()).map(|(x, y)| x - y).collect();
        let out = Array::from_vec(va.shape(), data).expect("same shape");
        self.push(
            out,
            Some(Box::new(move |_vals, g| {
                let mut neg = g.clone();
                neg.scale_assign(-1.0);
                vec![(a, g.clone()), (b, neg)]
            })),
        )
    }

    /// Elementwise product of two same-shape nodes.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.values[a.0], &self.values[b.0]);
        assert_eq!(
            va.shape(),
            vb.shape(),
            "mul shape mismatch: {:?} vs {:?}",
            va.shape(),
            vb.shape()
        );
        let data: Vec<f64> = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let out = Array::from_vec(va.shape(), data).expect("same shape");
        self.push(
            out,
            Some(Box::new(move |vals, g| {
                let ga_data: Vec<f64> =
                    g.data().iter().zip(vals[b.0].data()).map(|(g, y)| g * y).collect();
                let gb_data: Vec<f64> =
                    g.data().iter().zip(vals[a.0].data()).map(|(g, x)| g * x).collect();
                vec![
                    (a, Array::from_vec(g.shape(), ga_data).expect("same shape")),
                    (b, Array::from_vec(g.shape(), gb_data).expect("same shape")),
                ]
            })),
        )
    }

    /// Multiply every element by a compile-time constant.
    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let mut out = self.values[a.0].clone();
        out.scale_assign(factor);
        self.push(
            out,
            Some(Box::new(move |_vals, g| {
                let mut ga = g.clone();
                ga.scale_assign(factor);
                vec![(a, ga)]
            })),
        )
    }

    /// Matrix product `a @ b`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.values[a.0].matmul(&self.values[b.0]);
        self.push(
            out,
            Some(Box::new(move |vals, g| {
                vec![(a, g.matmul_nt(&vals[b.0])), (b, vals[a.0].matmul_tn(g))]
            })),
        )
    }

    /// Matrix product `a @ b.T`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.values[a.0].matmul_nt(&self.values[b.0]);
        self.push(
            out,
            Some(Box::new(move |vals, g| {
                vec![(a, g.matmul(&vals[b.0])), (b, g.matmul_tn(&vals[a.0]))]
            })),
        )
    }

    /// Add a `[1, n]` row vector to every row of a `[m, n]` node.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let (va, vr) = (&self.values[a.0], &self.values[row.0]);
        let (m, n) = (va.rows(), va.cols());
        assert_eq!(
            vr.shape(),
            &[1, n],
            "add_row expects [1, {n}] row, got {:?}",
            vr.shape()
        );
        let mut out = va.clone();
        for r in 0..m {
            for c in 0..n {
                let v = out.at(r, c) + vr.at(0, c);
                out.set(r, c, v);
            }
        }
        self.push(
            out,
            Some(Box::new(move |_vals, g| {
                let n = g.cols();
                let mut row_grad = Array::zeros(&[1, n]);
                for r in 0..g.rows() {
                    for c in 0..n {
                        let v = row_grad.at(0, c) + g.at(r, c);
                        row_grad.set(0, c, v);
                    }
                }
                vec![(a, g.clone()), (row, row_grad)]
            })),
        )
    }

    /// Elementwise hyperbolic tangent.
    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let data: Vec<f64> = self.values[a.0].data().iter().map(|v| v.tanh()).collect();
        let out = Array::from_vec(self.values[a.0].shape(), data).expect("same shape");
        let out_id = NodeId(self.values.len());
        self.push(
            out,
            Some(Box::new(move |vals, g| {
                let y = &vals[out_id.0];
                let data: Vec<f64> =
                    g.data().iter().zip(y.data()).map(|(g, y)| g * (1.0 - y * y)).collect();
                vec![(a, Array::from_vec(g.shape(), data).expect("same shape"))]
            })),
        )
    }

    /// Row-wise softmax of a `[m, n]` node (max-subtracted for stability).
    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let va = &self.values[a.0];
        let (m, n) = (va.rows(), va.cols());
        let mut out = Array::zeros(&[m, n]);
        for r in 0..m {
            let row = va.row_slice(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            for c in 0..n {
                out.set(r, c, exps[c] / sum);
            }
        }
        let out_id = NodeId(self.values.len());
        self.push(
            out,
            Some(Box::new(move |vals, g| {
                let y = &vals[out_id.0];
                let (m, n) = (y.rows(), y.cols());
                let mut dx = Array::zeros(&[m, n]);
                for r in 0..m {
                    let y_row = y.row_slice(r);
                    let g_row = g.row_slice(r);
                    let dot: f64 = y_row.iter().zip(g_row).map(|(y, g)| y * g).sum();
                    for c in 0..n {
                        dx.set(r, c, y_row[c] * (g_row[c] - dot));
                    }
                }
                vec![(a, dx)]
            })),
        )
    }

    /// Elementwise `ln(max(x, floor))`.
    ///
    /// Inputs at or below the floor land in a flat region with zero gradient.
    pub fn ln_clamped(&mut self, a: NodeId, floor: f64) -> NodeId {
        assert!(floor > 0.0, "ln_clamped floor must be positive, got {floor}");
        let data: Vec<f64> =
            self.values[a.0].data().iter().map(|v| v.max(floor).ln()).collect();
        let out = Array::from_vec(self.values[a.0].shape(), data).expect("same shape");
        self.push(
            out,
            Some(Box::new(move |vals, g| {
                let x = &vals[a.0];
                let data: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(g, x)| if *x > floor { g / x } else { 0.0 })
                    .collect();
                vec![(a, Array::from_vec(g.shape(), data).expect("same shape"))]
            })),
        )
    }

    /// Sum of all elements, as a `[1, 1]` node.
    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let total = self.values[a.0].sum();
        self.push(
            Array::scalar(total),
            Some(Box::new(move |vals, g| {
                vec![(a, Array::full(vals[a.0].shape(), g.scalar_value()))]
            })),
        )
    }

    /// Mean of all elements, as a `[1, 1]` node.
    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.values[a.0].len() as f64;
        let mean = self.values[a.0].sum() / n;
        self.push(
            Array::scalar(mean),
            Some(Box::new(move |vals, g| {
                vec![(a, Array::full(vals[a.0].shape(), g.scalar_value() / n))]
            })),
        )
    }

    /// Column means of a `[m, n]` node, as a `[1, n]` node.
    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let va = &self.values[a.0];
        let (m, n) = (va.rows(), va.cols());
        let mut out = Array::zeros(&[1, n]);
        for r in 0..m {
            for c in 0..n {
                let v = out.at(0, c) + va.at(r, c) / m as f64;
                out.set(0, c, v);
            }
        }
        self.push(
            out,
            Some(Box::new(move |_vals, g| {
                let n = g.cols();
                let mut dx = Array::zeros(&[m, n]);
                for r in 0..m {
                    for c in 0..n {
                        dx.set(r, c, g.at(0, c) / m as f64);
                    }
                }
                vec![(a, dx)]
            })),
        )
    }

    /// Stack rank-2 nodes with equal column counts along the row axis.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat_rows needs at least one part");
        let n = self.values[parts[0].0].cols();
        let mut data = Vec::new();
        let mut row_counts = Vec::with_capacity(parts.len());
        for &p in parts {
            let v = &self.values[p.0];
            assert_eq!(v.cols(), n, "concat_rows column mismatch: {} vs {}", v.cols(), n);
            row_counts.push(v.rows());
            data.extend_from_slice(v.data());
        }
        let total_rows: usize = row_counts.iter().sum();
        let out = Array::from_vec(&[total_rows, n], data).expect("concat buffer");
        let parts: Vec<NodeId> = parts.to_vec();
        self.push(
            out,
            Some(Box::new(move |_vals, g| {
                let n = g.cols();
                let mut grads = Vec::with_capacity(parts.len());
                let mut row = 0;
                for (&p, &rows) in parts.iter().zip(&row_counts) {
                    let slice = &g.data()[row * n..(row + rows) * n];
                    grads.push((p, Array::from_vec(&[rows, n], slice.to_vec()).expect("slice")));
                    row += rows;
                }
                grads
            })),
        )
    }

    /// Select columns of a `[1, n]` node, as a `[1, k]` node.
    ///
    /// Repeated indices are allowed; their gradient contributions accumulate.
    pub fn gather_cols(&mut self, a: NodeId, indices: &[usize]) -> NodeId {
        let va = &self.values[a.0];
        assert_eq!(va.rows(), 1, "gather_cols expects a [1, n] node, got {:?}", va.shape());
        let n = va.cols();
        let data: Vec<f64> = indices
            .iter()
            .map(|&i| {
                assert!(i < n, "gather_cols index {i} out of range for {n} columns");
                va.at(0, i)
            })
            .collect();
        let indices: Vec<usize> = indices.to_vec();
        let out = Array::from_vec(&[1, indices.len()], data).expect("gather buffer");
        self.push(
            out,
            Some(Box::new(move |_vals, g| {
                let mut dx = Array::zeros(&[1, n]);
                for (slot, &i) in indices.iter().enumerate() {
                    let v = dx.at(0, i) + g.at(0, slot);
                    dx.set(0, i, v);
                }
                vec![(a, dx)]
            })),
        )
    }

    /// Divide every element of `a` by a `[1, 1]` scalar node.
    pub fn div_by_scalar(&mut self, a: NodeId, s: NodeId) -> NodeId {
        let sv = self.values[s.0].scalar_value();
        let mut out = self.values[a.0].clone();
        out.scale_assign(1.0 / sv);
        self.push(
            out,
            Some(Box::new(move |vals, g| {
                let sv = vals[s.0].scalar_value();
                let mut ga = g.clone();
                ga.scale_assign(1.0 / sv);
                let dot: f64 =
                    g.data().iter().zip(vals[a.0].data()).map(|(g, x)| g * x).sum();
                vec![(a, ga), (s, Array::scalar(-dot / (sv * sv)))]
            })),
        )
    }

    /// Multiply every element of `a` by a `[1, 1]` scalar node.
    pub fn mul_by_scalar(&mut self, a: NodeId, s: NodeId) -> NodeId {
        let sv = self.values[s.0].scalar_value();
        let mut out = self.values[a.0].clone();
        out.scale_assign(sv);
        self.push(
            out,
            Some(Box::new(move |vals, g| {
                let sv = vals[s.0].scalar_value();
                let mut ga = g.clone();
                ga.scale_assign(sv);
                let dot: f64 =
                    g.data().iter().zip(vals[a.0].data()).map(|(g, x)| g * x).sum();
                vec![(a, ga), (s, Array::scalar(dot))]
            })),
        )
    }

    /// Row-wise layer normalization with learned gain and bias.
    ///
    /// Each row of `x` is standardized to zero mean and unit variance
    /// (population variance, stabilized by `eps`), then scaled and shifted.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId, eps: f64) -> NodeId {
        let vx = &self.values[x.0];
        let (m, n) = (vx.rows(), vx.cols());
        let vg = &self.values[gain.0];
        let vb = &self.values[bias.0];
        assert_eq!(vg.shape(), &[1, n], "layer_norm gain must be [1, {n}], got {:?}", vg.shape());
        assert_eq!(vb.shape(), &[1, n], "layer_norm bias must be [1, {n}], got {:?}", vb.shape());
        let mut out = Array::zeros(&[m, n]);
        let mut hat = Array::zeros(&[m, n]);
        let mut inv_std = vec![0.0; m];
        for r in 0..m {
            let row = vx.row_slice(r);
            let mean: f64 = row.iter().sum::<f64>() / n as f64;
            let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[r] = inv;
            for c in 0..n {
                let h = (row[c] - mean) * inv;
                hat.set(r, c, h);
                out.set(r, c, vg.at(0, c) * h + vb.at(0, c));
            }
        }
        self.push(
            out,
            Some(Box::new(move |vals, g| {
                let vg = &vals[gain.0];
                let (m, n) = (g.rows(), g.cols());
                let mut dx = Array::zeros(&[m, n]);
                let mut dgain = Array::zeros(&[1, n]);
                let mut dbias = Array::zeros(&[1, n]);
                for r in 0..m {
                    let g_row = g.row_slice(r);
                    let h_row = hat.row_slice(r);
                    // Gradient through the standardized activations.
                    let dhat: Vec<f64> =
                        (0..n).map(|c| g_row[c] * vg.at(0, c)).collect();
                    let mean_dhat: f64 = dhat.iter().sum::<f64>() / n as f64;
                    let mean_dhat_hat: f64 =
                        dhat.iter().zip(h_row).map(|(d, h)| d * h).sum::<f64>() / n as f64;
                    for c in 0..n {
                        dx.set(
                            r,
                            c,
                            inv_std[r] * (dhat[c] - mean_dhat - h_row[c] * mean_dhat_hat),
                        );
                        let vgn = dgain.at(0, c) + g_row[c] * h_row[c];
                        dgain.set(0, c, vgn);
                        let vbn = dbias.at(0, c) + g_row[c];
                        dbias.set(0, c, vbn);
                    }
                }
                vec![(x, dx), (gain, dgain), (bias, dbias)]
            })),
        )
    }

    /// Reverse sweep from a scalar loss node, accumulating parameter
    /// gradients into the store.
    ///
    /// Parameters that were inserted into the graph but receive no gradient
    /// are left untouched (their contribution is zero) and a warning is
    /// logged once per call.
    pub fn backprop(&mut self, loss: NodeId, store: &mut ParamStore) -> Result<()> {
        let loss_shape = self.values[loss.0].shape().to_vec();
        if loss_shape != [1, 1] {
            return Err(NumericsError::NonScalarLoss { shape: loss_shape });
        }
        assert!(self.grad_enabled, "backprop called on an inference graph");

        let mut grads: Vec<Option<Array>> = vec![None; self.values.len()];
        grads[loss.0] = Some(Array::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let Some(rec) = &self.recs[idx] else { continue };
            let Some(g) = grads[idx].take() else { continue };
            for (parent, contrib) in rec(&self.values, &g) {
                debug_assert!(parent.0 < idx, "backward rule references a later node");
                match &mut grads[parent.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            }
        }

        for (param_id, node_id) in &self.param_nodes {
            match grads[node_id.0].take() {
                Some(g) => store.accumulate_grad(*param_id, &g),
                None => log::warn!(
                    "parameter `{}` is disconnected from the loss; gradient contribution is zero",
                    store.get(*param_id).name
                ),
            }
        }
        Ok(())
    }
}
