use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Gradients;
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are laid out per parameter id.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros = |t: &Tensor| Tensor::zeros(t.rows(), t.cols());
        Self {
            config,
            step: 0,
            first: params.iter().map(|(_, _, t)| zeros(t)).collect(),
            second: params.iter().map(|(_, _, t)| zeros(t)).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. Parameters without a gradient are treated as having
    /// a zero gradient. All gradients are validated before anything changes.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) -> Result<()> {
        let collected: Vec<Option<Tensor>> = params.ids().map(|id| grads.param(id)).collect();
        for (id, g) in params.ids().zip(&collected) {
            if let Some(g) = g {
                if g.shape() != params.get(id).shape() {
                    return Err(Error::ShapeMismatch {
                        op: "adam",
                        left: params.get(id).shape(),
                        right: g.shape(),
                    });
                }
                if !g.is_finite() {
                    return Err(Error::NonFiniteGradient {
                        name: params.name(id).to_string(),
                    });
                }
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (id, g) in params.ids().collect::<Vec<_>>().into_iter().zip(collected) {
            let i = id.index();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            let p = params.get_mut(id).data_mut();
            match g {
                Some(g) => {
                    for (((p, m), v), g) in p.iter_mut().zip(m).zip(v).zip(g.data()) {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
                    }
                }
                None => {
                    for ((p, m), v) in p.iter_mut().zip(m).zip(v) {
                        *m *= beta1;
                        *v *= beta2;
                        *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
