use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{KernelError, ParamStore, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

struct Moments<T> {
    m: Tensor<T>,
    v: Tensor<T>,
}

/// Adam or plain SGD over the non-frozen parameters of a store.
pub struct Optimizer<T> {
    settings: OptimizerSettings,
    step: u64,
    moments: HashMap<String, Moments<T>>,
}

impl<T: Real> Optimizer<T> {
    pub fn new(settings: OptimizerSettings) -> Self {
        Self {
            settings,
            step: 0,
            moments: HashMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients currently stored in `params`.
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamStore<T>) -> Result<(), KernelError> {
        for p in params.iter().filter(|p| !p.is_frozen()) {
            if !p.grad.is_finite() {
                return Err(KernelError::NonFiniteGradient(p.name().to_string()));
            }
        }
        self.step += 1;
        let s = self.settings;
        let lr = T::of(s.learning_rate);
        match s.kind {
            OptimizerKind::Sgd => {
                for p in params.iter_mut().filter(|p| !p.is_frozen()) {
                    let grad = p.grad.data().to_vec();
                    for (w, g) in p.value.data_mut().iter_mut().zip(grad) {
                        *w = *w - lr * g;
                    }
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2) = (T::of(s.beta1), T::of(s.beta2));
                let eps = T::of(s.epsilon);
                let t = self.step as i32;
                let c1 = T::one() - T::of(s.beta1.powi(t));
                let c2 = T::one() - T::of(s.beta2.powi(t));
                for p in params.iter_mut().filter(|p| !p.is_frozen()) {
                    let state =
                        self.moments
                            .entry(p.name().to_string())
                            .or_insert_with(|| Moments {
                                m: Tensor::zeros(p.value.shape()),
                                v: Tensor::zeros(p.value.shape()),
                            });
                    let grad = p.grad.data();
                    let (m, v) = (state.m.data_mut(), state.v.data_mut());
                    let w = p.value.data_mut();
                    for i in 0..grad.len() {
                        let g = grad[i];
                        m[i] = b1 * m[i] + (T::one() - b1) * g;
                        v[i] = b2 * v[i] + (T::one() - b2) * g * g;
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        w[i] = w[i] - lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
