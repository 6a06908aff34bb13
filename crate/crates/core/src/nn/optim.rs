use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamStore};
use super::scalar::Real;
use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adaptive-moment optimizer with bias correction.
pub struct Adam<T> {
    config: AdamConfig,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamStore<T>) -> Self {
        let zeros = || params.ids().map(|id| Tensor::zeros(params.get(id).shape())).collect();
        Self { config, step: 0, m: zeros(), v: zeros() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update; `grads` is in store order.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Tensor<T>]) {
        assert_eq!(grads.len(), params.len(), "gradient count mismatch");
        self.step += 1;
        let c = self.config;
        let t = self.step as f64;
        let bc1 = 1.0 - c.beta1.powf(t);
        let bc2 = 1.0 - c.beta2.powf(t);
        let step_size = T::from_f64_lossy(c.lr * bc2.sqrt() / bc1);
        let (b1, b2) = (T::from_f64_lossy(c.beta1), T::from_f64_lossy(c.beta2));
        let eps = T::from_f64_lossy(c.eps * bc2.sqrt());
        for (i, g) in grads.iter().enumerate() {
            let p = params.get_mut(ParamId(i));
            assert_eq!(p.shape(), g.shape(), "gradient shape mismatch");
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mi = b1 * *mi + (T::one() - b1) * gi;
                *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                *w = *w - step_size * *mi / (vi.sqrt() + eps);
            }
        }
    }
}
