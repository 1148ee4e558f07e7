use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub iterations: usize,
    pub steps_per_update: usize,
    pub lr: f64,
    pub gamma: f64,
    pub clip_eps: f64,
    pub gae_lambda: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub epochs_per_update: usize,
    /// Minibatch size; `None` uses the whole buffer.
    pub minibatch: Option<usize>,
    pub normalize_advantages: bool,
    /// Number of trailing iterations with finished episodes whose mean
    /// episode reward decides the best checkpoint.
    pub best_window: usize,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            steps_per_update: 20,
            lr: 1e-4,
            gamma: 0.99,
            clip_eps: 0.2,
            gae_lambda: 0.95,
            value_coef: 0.5,
            entropy_coef: 0.01,
            epochs_per_update: 4,
            minibatch: None,
            normalize_advantages: true,
            best_window: 20,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail("gamma must lie in (0, 1]");
        }
        if !(self.gae_lambda >= 0.0 && self.gae_lambda <= 1.0) {
            return fail("gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return fail("clip_eps must lie in (0, 1)");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail("lr must be finite and >= 0");
        }
        if !(self.value_coef >= 0.0 && self.entropy_coef >= 0.0) {
            return fail("loss coefficients must be >= 0");
        }
        if self.iterations == 0 || self.steps_per_update == 0 || self.epochs_per_update == 0 || self.best_window == 0 {
            return fail("iteration, step, epoch and window counts must be positive");
        }
        if self.minibatch == Some(0) {
            return fail("minibatch must be positive");
        }
        Ok(())
    }
}
