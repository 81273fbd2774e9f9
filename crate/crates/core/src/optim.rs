//! Optimizers: Adam with bias correction and plain SGD.
//!
//! Moment state is keyed by parameter name with an independent step counter
//! per parameter, so alternating training schedules that update disjoint
//! subsets keep correct bias correction for each.

use std::collections::HashMap;

use crate::param::Parameter;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
struct Moments {
    m: Tensor,
    v: Tensor,
    step: u64,
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    entries: HashMap<String, Moments>,
}

impl AdamState {
    /// Defaults match the training setup: β1=0.9, β2=0.999, ε=1e-8, lr=1e-4.
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            entries: HashMap::new(),
        }
    }

    /// One Adam update over the given parameters, reading their accumulated
    /// gradients. Parameters not present in the slice are untouched.
    pub fn step(&mut self, params: &mut [&mut Parameter]) {
        for p in params.iter_mut() {
            let entry = self
                .entries
                .entry(p.name.clone())
                .or_insert_with(|| Moments {
                    m: Tensor::zeros(p.value.shape().to_vec()),
                    v: Tensor::zeros(p.value.shape().to_vec()),
                    step: 0,
                });
            assert_eq!(
                entry.m.shape(),
                p.value.shape(),
                "adam moment shape mismatch for parameter {}",
                p.name
            );
            entry.step += 1;
            let t = entry.step;
            let bc1 = 1.0 - self.beta1.powi(t as i32);
            let bc2 = 1.0 - self.beta2.powi(t as i32);
            let value = p.value.data_mut();
            let grad = p.grad.data();
            let m = entry.m.data_mut();
            let v = entry.v.data_mut();
            for i in 0..value.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                value[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Plain gradient descent: value <- value - lr * grad.
pub fn sgd_step(params: &mut [&mut Parameter], lr: f64) {
    for p in params.iter_mut() {
        let value = p.value.data_mut();
        let grad = p.grad.data();
        for i in 0..value.len() {
            value[i] -= lr * grad[i];
        }
    }
}

/// The optimizer selected by a run configuration.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Adam(AdamState),
    Sgd { lr: f64 },
}

impl Optimizer {
    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam(AdamState::new(lr))
    }

    pub fn sgd(lr: f64) -> Self {
        Optimizer::Sgd { lr }
    }

    pub fn step(&mut self, params: &mut [&mut Parameter]) {
        match self {
            Optimizer::Adam(state) => state.step(params),
            Optimizer::Sgd { lr } => sgd_step(params, *lr),
        }
    }
}
