use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use lullaby_autodiff::{read_checkpoint, write_checkpoint, Graph, ParamStore, Tensor, Var};
use lullaby_core::domain::AggressivenessLevel;
use lullaby_core::env::PolicyInput;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::PolicyConfig;
use crate::error::{Error, Result};
use crate::trunk::{lecun, linear, Linear, Trunk};

const DESCRIPTOR_KIND: &str = "lullaby-policy";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActMode {
    Sample,
    Greedy,
}

/// Logits and value for a single observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub logits: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    /// Categorical index; `level` is its aggressiveness.
    pub action: usize,
    pub level: AggressivenessLevel,
    pub log_prob: f64,
    pub value: f64,
}

/// Graph handles for a batch: `logits` is `batch x actions`, `values` is
/// `batch x 1`.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    pub logits: Var,
    pub values: Var,
}

#[derive(Debug, Serialize, Deserialize)]
struct Descriptor {
    kind: String,
    config: PolicyConfig,
}

/// Actor-critic network over K-step observation windows.
#[derive(Debug, Clone)]
pub struct Policy {
    cfg: PolicyConfig,
    store: ParamStore,
    actor_trunk: Trunk,
    critic_trunk: Option<Trunk>,
    actor: Linear,
    critic: Linear,
}

impl Policy {
    pub fn new(cfg: PolicyConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let actor_trunk = Trunk::build(&cfg, "", &mut store, &mut rng)?;
        let critic_trunk = if cfg.shared_trunk {
            None
        } else {
            Some(Trunk::build(&cfg, "critic.", &mut store, &mut rng)?)
        };
        let f = cfg.feature_dim();
        let a = cfg.actions.cardinality();
        let actor_init = lecun(f, f, a, &mut rng).map(|v| v * cfg.actor_init_scale);
        let actor = linear(&mut store, "head.actor", actor_init, true)?;
        let critic = linear(&mut store, "head.critic", lecun(f, f, 1, &mut rng), true)?;
        Ok(Self {
            cfg,
            store,
            actor_trunk,
            critic_trunk,
            actor,
            critic,
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn action_count(&self) -> usize {
        self.cfg.actions.cardinality()
    }

    fn check(&self, input: &PolicyInput) -> Result<()> {
        if input.k != self.cfg.seq_len || input.dim != self.cfg.input_dim {
            return Err(Error::InputShape {
                expected_k: self.cfg.seq_len,
                expected_dim: self.cfg.input_dim,
                k: input.k,
                dim: input.dim,
            });
        }
        Ok(())
    }

    /// Stacks a batch into a `(batch * k) x dim` constant, item-major.
    pub fn stack(&self, g: &mut Graph, inputs: &[PolicyInput]) -> Result<Var> {
        if inputs.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        let mut data = Vec::with_capacity(inputs.len() * self.cfg.seq_len * self.cfg.input_dim);
        for i in inputs {
            self.check(i)?;
            data.extend_from_slice(&i.data);
        }
        let t = Tensor::from_vec(inputs.len() * self.cfg.seq_len, self.cfg.input_dim, data)?;
        Ok(g.constant(t))
    }

    /// Per-column embeddings of one observation, `k x width`.
    pub fn encode_states(&self, g: &mut Graph, input: &PolicyInput) -> Result<Var> {
        let x = self.stack(g, std::slice::from_ref(input))?;
        self.actor_trunk.encode(&self.store, g, x)
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        inputs: &[PolicyInput],
        train: bool,
        rng: &mut R,
    ) -> Result<Forward> {
        let x = self.stack(g, inputs)?;
        let n = inputs.len();
        let actor_features = self.actor_trunk.features(&self.store, g, x, n, train, rng)?;
        let critic_features = match &self.critic_trunk {
            Some(t) => t.features(&self.store, g, x, n, train, rng)?,
            None => actor_features,
        };
        Ok(Forward {
            logits: self.actor.forward(&self.store, g, actor_features)?,
            values: self.critic.forward(&self.store, g, critic_features)?,
        })
    }

    /// Inference without dropout.
    pub fn evaluate(&self, input: &PolicyInput) -> Result<PolicyOutput> {
        let mut g = Graph::new();
        let mut no_rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.forward(&mut g, std::slice::from_ref(input), false, &mut no_rng)?;
        Ok(PolicyOutput {
            logits: g.value(out.logits).data().to_vec(),
            value: g.value(out.values).item(),
        })
    }

    pub fn act<R: Rng + ?Sized>(&self, input: &PolicyInput, mode: ActMode, rng: &mut R) -> Result<Decision> {
        let out = self.evaluate(input)?;
        let log_probs = log_softmax(&out.logits);
        let action = match mode {
            ActMode::Greedy => greedy(&out.logits),
            ActMode::Sample => sample(&log_probs, rng),
        };
        Ok(Decision {
            action,
            level: self.cfg.actions.level(action)?,
            log_prob: log_probs[action],
            value: out.value,
        })
    }

    fn descriptor(&self) -> serde_json::Value {
        serde_json::to_value(Descriptor {
            kind: DESCRIPTOR_KIND.into(),
            config: self.cfg.clone(),
        })
        .expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let fail = |e: &dyn std::fmt::Display| Error::Checkpoint {
            path: path.to_path_buf(),
            reason: e.to_string(),
        };
        let file = File::create(path).map_err(|e| fail(&e))?;
        write_checkpoint(BufWriter::new(file), &self.store, &self.descriptor()).map_err(|e| fail(&e))
    }

    /// Rebuilds a policy from a checkpoint; the architecture comes from the
    /// embedded descriptor.
    pub fn load(path: &Path) -> Result<Self> {
        let fail = |reason: String| Error::Checkpoint {
            path: path.to_path_buf(),
            reason,
        };
        let file = File::open(path).map_err(|e| fail(e.to_string()))?;
        let (store, descriptor) = read_checkpoint(BufReader::new(file)).map_err(|e| fail(e.to_string()))?;
        let d: Descriptor = serde_json::from_value(descriptor).map_err(|e| fail(format!("descriptor: {e}")))?;
        if d.kind != DESCRIPTOR_KIND {
            return Err(fail(format!("descriptor kind `{}` is not a policy", d.kind)));
        }
        Self::from_store(d.config, store).map_err(|e| fail(e.to_string()))
    }

    /// Builds the architecture for `cfg` and takes every tensor from `store`.
    pub fn from_store(cfg: PolicyConfig, store: ParamStore) -> Result<Self> {
        let mut policy = Self::new(cfg, 0)?;
        if store.len() != policy.store.len() {
            return Err(Error::Config(format!(
                "expected {} tensors, found {}",
                policy.store.len(),
                store.len()
            )));
        }
        for id in policy.store.ids().collect::<Vec<_>>() {
            let name = policy.store.name(id).to_string();
            let src = store.get(store.id(&name)?);
            let dst = policy.store.get_mut(id);
            if src.shape() != dst.shape() {
                return Err(Error::Config(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    src.shape(),
                    dst.shape()
                )));
            }
            *dst = src.clone();
        }
        Ok(policy)
    }
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// First index of the maximum, so ties go to the lowest level.
pub fn greedy(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &l) in logits.iter().enumerate() {
        if l > logits[best] {
            best = i;
        }
    }
    best
}

fn sample<R: Rng + ?Sized>(log_probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, lp) in log_probs.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return i;
        }
    }
    log_probs.len() - 1
}
