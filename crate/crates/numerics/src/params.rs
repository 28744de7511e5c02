//! Named trainable parameters and their gradient buffers.

use crate::array::Array;
use crate::precision::Precision;
use crate::rng::DetRng;

/// Handle to one parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    /// Position of the parameter in its store (stable for a given model build).
    pub fn index(&self) -> usize {
        self.0
    }
}

/// One named tensor of trainable weights plus its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Parameter {
    /// Dotted path such as `decoder.block2.moe.expert3.w1`.
    pub name: String,
    /// Current weight values.
    pub value: Array,
    /// Gradient accumulated since the last optimizer step.
    pub grad: Array,
}

/// Flat collection of all parameters of a model.
///
/// Construction order is deterministic, so `ParamId` indices and the
/// name/shape manifest are stable across runs with the same configuration.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<Parameter>,
}

impl ParamStore {
    /// Empty store.
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a parameter with explicit initial values.
    pub fn add(&mut self, name: impl Into<String>, value: Array) -> ParamId {
        let grad = Array::zeros(value.shape());
        self.entries.push(Parameter { name: name.into(), value, grad });
        ParamId(self.entries.len() - 1)
    }

    /// Register a `[rows, cols]` parameter with scaled-normal initialization.
    ///
    /// The scale is `sqrt(2 / (rows + cols))`, drawn from the given stream.
    pub fn add_normal(&mut self, name: impl Into<String>, rows: usize, cols: usize, rng: &mut DetRng) -> ParamId {
        let std = (2.0 / (rows + cols) as f64).sqrt();
        let data = rng.normal_vec(rows * cols, std);
        let value = Array::from_vec(&[rows, cols], data).expect("init buffer matches shape");
        self.add(name, value)
    }

    /// Register a zero-initialized `[rows, cols]` parameter.
    pub fn add_zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        self.add(name, Array::zeros(&[rows, cols]))
    }

    /// Number of parameters (tensors, not scalars).
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// True when the store holds no parameters.
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar weights across all parameters.
    pub fn total_elements(&self) -> usize {
        self.entries.iter().map(|p| p.value.len()).sum()
    }

    /// Immutable access to one parameter.
    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.entries[id.0]
    }

    /// Mutable access to one parameter.
    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.entries[id.0]
    }

    /// All parameter ids in registration order.
    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    /// Iterate over all parameters in registration order.
    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.entries.iter()
    }

    /// Look up a parameter id by its full name.
    pub fn id_by_name(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Add `delta` into the gradient buffer of one parameter.
    ///
    /// # Panics
    /// Panics if the delta shape does not match the parameter shape.
    pub fn accumulate_grad(&mut self, id: ParamId, delta: &Array) {
        self.entries[id.0].grad.add_assign(delta);
    }

    /// Reset every gradient buffer to zero.
    pub fn zero_grads(&mut self) {
        for p in &mut self.entries {
            p.grad = Array::zeros(p.value.shape());
        }
    }

    /// Euclidean norm over the concatenation of all gradient buffers.
    pub fn global_grad_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|p| p.grad.data().iter().map(|g| g * g).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Round every parameter value to the given precision grid.
    pub fn quantize(&mut self, precision: Precision) {
        for p in &mut self.entries {
            p.value.quantize(precision);
        }
    }
}
