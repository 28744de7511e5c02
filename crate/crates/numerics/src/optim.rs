//! Adam-style optimizer with warmup and global gradient clipping.

use serde::{Deserialize, Serialize};

use crate::array::Array;
use crate::params::ParamStore;
use crate::precision::Precision;

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Peak learning rate.
    pub learning_rate: f64,
    /// First-moment decay.
    pub beta1: f64,
    /// Second-moment decay.
    pub beta2: f64,
    /// Denominator stabilizer.
    pub eps: f64,
    /// Steps of linear learning-rate warmup from zero.
    pub warmup_steps: usize,
    /// Maximum global gradient norm before scaling.
    pub clip_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            warmup_steps: 100,
            clip_norm: 1.0,
        }
    }
}

/// Adam optimizer state (first and second moments per parameter).
#[derive(Debug, Clone)]
pub struct AdamOptimizer {
    config: OptimizerConfig,
    precision: Precision,
    step_count: usize,
    m: Vec<Array>,
    v: Vec<Array>,
}

impl AdamOptimizer {
    /// Fresh optimizer with zeroed moments matching the store layout.
    pub fn new(config: OptimizerConfig, precision: Precision, store: &ParamStore) -> Self {
        let m = store.iter().map(|p| Array::zeros(p.value.shape())).collect();
        let v = store.iter().map(|p| Array::zeros(p.value.shape())).collect();
        Self { config, precision, step_count: 0, m, v }
    }

    /// Optimizer hyperparameters.
    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// Number of completed update steps.
    pub fn step_count(&self) -> usize {
        self.step_count
    }

    /// Effective learning rate at the current step under linear warmup.
    pub fn effective_learning_rate(&self) -> f64 {
        let warmup = if self.config.warmup_steps == 0 {
            1.0
        } else {
            (self.step_count as f64 / self.config.warmup_steps as f64).min(1.0)
        };
        self.config.learning_rate * warmup
    }

    /// Global clip factor for the current gradients (1.0 when under the cap).
    pub fn clip_factor(&self, store: &ParamStore) -> f64 {
        let norm = store.global_grad_norm();
        if norm > self.config.clip_norm && norm > 0.0 {
            self.config.clip_norm / norm
        } else {
            1.0
        }
    }

    /// Apply one update from the accumulated gradients, then zero them.
    ///
    /// Gradients are first scaled so their global norm does not exceed
    /// `clip_norm`; the learning rate ramps linearly over `warmup_steps`
    /// (step 0 applies a zero rate). Moment estimates update even while the
    /// warmup rate is zero.
    pub fn step(&mut self, store: &mut ParamStore) {
        assert_eq!(self.m.len(), store.len(), "optimizer state does not match parameter store");
        let clip = self.clip_factor(store);
        let lr = self.effective_learning_rate();
        let t = (self.step_count + 1) as f64;
        let bias1 = 1.0 - self.config.beta1.powf(t);
        let bias2 = 1.0 - self.config.beta2.powf(t);

        for (idx, id) in store.ids().enumerate() {
            let param = store.get_mut(id);
            let m = self.m[idx].data_mut();
            let v = self.v[idx].data_mut();
            let grads = param.grad.data();
            let values = param.value.data_mut();
            for i in 0..values.len() {
                let g = grads[i] * clip;
                m[i] = self.config.beta1 * m[i] + (1.0 - self.config.beta1) * g;
                v[i] = self.config.beta2 * v[i] + (1.0 - self.config.beta2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                values[i] -= lr * m_hat / (v_hat.sqrt() + self.config.eps);
            }
            param.value.quantize(self.precision);
        }
        store.zero_grads();
        self.step_count += 1;
    }

    /// Moment buffers in parameter order, for checkpointing.
    pub fn moments(&self) -> (&[Array], &[Array]) {
        (&self.m, &self.v)
    }

    /// Restore step count and moment buffers from a checkpoint.
    ///
    /// # Panics
    /// Panics if the buffer layout does not match the optimizer.
    pub fn restore(&mut self, step_count: usize, m: Vec<Array>, v: Vec<Array>) {
        assert_eq!(m.len(), self.m.len(), "restored first moments do not match layout");
        assert_eq!(v.len(), self.v.len(), "restored second moments do not match layout");
        for (slot, arr) in self.m.iter().zip(&m) {
            assert_eq!(slot.shape(), arr.shape(), "first-moment shape mismatch");
        }
        for (slot, arr) in self.v.iter().zip(&v) {
            assert_eq!(slot.shape(), arr.shape(), "second-moment shape mismatch");
        }
        self.step_count = step_count;
        self.m = m;
        self.v = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamStore;

    fn single_param_store(values: &[f64]) -> ParamStore {
        let mut store = ParamStore::new();
        store.add("w", Array::row(values));
        store
    }

    #[test]
    fn step_zero_with_warmup_changes_nothing() {
        let mut store = single_param_store(&[1.0, 2.0]);
        let id = store.id_by_name("w").unwrap();
        store.accumulate_grad(id, &Array::row(&[0.5, -0.5]));
        let mut opt = AdamOptimizer::new(
            OptimizerConfig { warmup_steps: 100, ..OptimizerConfig::default() },
            Precision::Double,
            &store,
        );
        assert_eq!(opt.effective_learning_rate(), 0.0);
        opt.step(&mut store);
        assert_eq!(store.get(id).value.data(), &[1.0, 2.0]);
        // Gradients are consumed even when the rate is zero.
        assert_eq!(store.get(id).grad.data(), &[0.0, 0.0]);
    }

    #[test]
    fn clip_factor_scales_norm_ten_down_to_one() {
        let mut store = single_param_store(&[0.0, 0.0]);
        let id = store.id_by_name("w").unwrap();
        // Gradient [6, 8] has norm 10.
        store.accumulate_grad(id, &Array::row(&[6.0, 8.0]));
        let opt = AdamOptimizer::new(
            OptimizerConfig { clip_norm: 1.0, ..OptimizerConfig::default() },
            Precision::Double,
            &store,
        );
        assert!((opt.clip_factor(&store) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn constant_gradient_moves_monotonically_toward_minimizer() {
        // f(w) = 0.5 * (w - 3)^2 starting at w = 0; the gradient at the start,
        // -3, is fed unchanged every step. Each update must move w strictly
        // toward the minimizer without overshooting within this step budget.
        let mut store = single_param_store(&[0.0]);
        let id = store.id_by_name("w").unwrap();
        let mut opt = AdamOptimizer::new(
            OptimizerConfig {
                learning_rate: 0.05,
                warmup_steps: 0,
                ..OptimizerConfig::default()
            },
            Precision::Double,
            &store,
        );
        let mut prev = store.get(id).value.data()[0];
        for _ in 0..40 {
            store.accumulate_grad(id, &Array::row(&[-3.0]));
            opt.step(&mut store);
            let w = store.get(id).value.data()[0];
            assert!(w > prev, "w should increase every step: {prev} -> {w}");
            assert!(w < 3.0, "w overshot the minimizer: {w}");
            prev = w;
        }
        assert!(prev > 1.0, "w moved too slowly: {prev}");
    }

    #[test]
    fn single_precision_updates_stay_on_f32_grid() {
        let mut store = single_param_store(&[0.25, 0.75]);
        let id = store.id_by_name("w").unwrap();
        store.accumulate_grad(id, &Array::row(&[0.3, -0.7]));
        let mut opt = AdamOptimizer::new(
            OptimizerConfig { warmup_steps: 0, learning_rate: 1e-3, ..OptimizerConfig::default() },
            Precision::Single,
            &store,
        );
        opt.step(&mut store);
        for v in store.get(id).value.data() {
            assert_eq!(*v, *v as f32 as f64);
        }
    }
}
