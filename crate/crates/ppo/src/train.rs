use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};

use lullaby_autodiff::{Adam, AdamConfig, Graph};
use lullaby_core::env::Environment;
use lullaby_nets::Policy;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::PpoConfig;
use crate::error::{Error, Result};
use crate::loss::{ppo_losses, Batch, LossCoefficients, LossStats};
use crate::rollout::{Collector, RolloutBuffer};

pub const CURVE_FILE: &str = "curve.csv";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

/// One row of the learning curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Mean accumulated reward of the episodes that ended in this iteration;
    /// empty when none did.
    pub mean_episode_reward: Option<f64>,
    /// Reward summed over the iteration's transitions.
    pub rollout_reward: f64,
    pub episodes_finished: usize,
    pub wakeups: usize,
    pub policy_objective: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total_loss: f64,
    pub clip_fraction: f64,
    pub param_norm: f64,
}

/// PPO over a single environment instance.
pub struct Trainer<E> {
    cfg: PpoConfig,
    policy: Policy,
    adam: Adam,
    collector: Collector<E>,
    rng: ChaCha8Rng,
    iteration: usize,
}

impl<E: Environment> Trainer<E> {
    pub fn new(cfg: PpoConfig, policy: Policy, env: E) -> Result<Self> {
        cfg.validate()?;
        if env.action_count() != policy.action_count() {
            return Err(Error::Config(format!(
                "environment has {} actions, policy has {}",
                env.action_count(),
                policy.action_count()
            )));
        }
        let adam = Adam::new(
            AdamConfig {
                lr: cfg.lr,
                ..AdamConfig::default()
            },
            policy.params(),
        );
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            policy,
            adam,
            collector: Collector::new(env),
            iteration: 0,
        })
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn into_policy(self) -> Policy {
        self.policy
    }

    pub fn config(&self) -> &PpoConfig {
        &self.cfg
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn env(&self) -> &E {
        self.collector.env()
    }

    fn diverged(&self, what: impl Into<String>) -> Error {
        Error::Diverged {
            iteration: self.iteration,
            what: what.into(),
            param_norm: self.policy.params().norm(),
        }
    }

    /// Turns numeric blow-ups into [`Error::Diverged`].
    fn guard<T>(&self, r: Result<T>) -> Result<T> {
        use lullaby_autodiff::Error as T;
        r.map_err(|e| match &e {
            Error::Tensor(T::NonFinite { .. } | T::NonFiniteGradient { .. })
            | Error::Nets(lullaby_nets::Error::Tensor(T::NonFinite { .. }))
            | Error::NonFiniteRatio { .. } => self.diverged(e.to_string()),
            _ => e,
        })
    }

    /// Collects one rollout and runs the configured epochs on it.
    pub fn step(&mut self) -> Result<IterationRecord> {
        let collected = self
            .collector
            .collect(&self.policy, self.cfg.steps_per_update, &mut self.rng);
        let mut buf = self.guard(collected)?;
        buf.compute_targets(self.cfg.gamma, self.cfg.gae_lambda, self.cfg.normalize_advantages);
        if !buf.advantages.iter().chain(&buf.returns).all(|v| v.is_finite()) {
            return Err(self.diverged("non-finite advantage or return"));
        }
        let mut last = LossStats::default();
        for _ in 0..self.cfg.epochs_per_update {
            let mut order: Vec<usize> = (0..buf.len()).collect();
            let size = match self.cfg.minibatch {
                Some(m) if m < buf.len() => {
                    order.shuffle(&mut self.rng);
                    m
                }
                _ => buf.len(),
            };
            for chunk in order.chunks(size) {
                let stats = self.update(&buf, chunk);
                last = self.guard(stats)?;
            }
        }
        let record = IterationRecord {
            iteration: self.iteration,
            mean_episode_reward: (!buf.episodes.is_empty())
                .then(|| buf.episodes.iter().map(|e| e.total_reward).sum::<f64>() / buf.episodes.len() as f64),
            rollout_reward: buf.total_reward(),
            episodes_finished: buf.episodes.len(),
            wakeups: buf.episodes.iter().filter(|e| e.woke).count(),
            policy_objective: last.clip_objective,
            value_loss: last.value_loss,
            entropy: last.entropy,
            total_loss: last.total,
            clip_fraction: last.clip_fraction,
            param_norm: self.policy.params().norm(),
        };
        self.iteration += 1;
        Ok(record)
    }

    fn update(&mut self, buf: &RolloutBuffer, idx: &[usize]) -> Result<LossStats> {
        let pick = |xs: &[f64]| idx.iter().map(|&i| xs[i]).collect::<Vec<_>>();
        let observations: Vec<_> = idx.iter().map(|&i| buf.observations[i].clone()).collect();
        let actions: Vec<usize> = idx.iter().map(|&i| buf.actions[i]).collect();
        let (old, adv, ret) = (pick(&buf.log_probs), pick(&buf.advantages), pick(&buf.returns));
        let batch = Batch {
            observations: &observations,
            actions: &actions,
            old_log_probs: &old,
            advantages: &adv,
            returns: &ret,
        };
        let coef = LossCoefficients {
            clip_eps: self.cfg.clip_eps,
            value_coef: self.cfg.value_coef,
            entropy_coef: self.cfg.entropy_coef,
        };
        let mut g = Graph::new();
        let (loss, stats) = ppo_losses(&mut g, &self.policy, &batch, &coef, true, &mut self.rng)?;
        if !stats.total.is_finite() {
            return Err(self.diverged(format!("loss is {}", stats.total)));
        }
        let grads = g.backward(loss)?;
        match self.adam.step(self.policy.params_mut(), &grads) {
            Ok(()) => Ok(stats),
            Err(lullaby_autodiff::Error::NonFiniteGradient { name }) => {
                Err(self.diverged(format!("non-finite gradient for `{name}`")))
            }
            Err(e) => Err(e.into()),
        }
    }
}

/// Result of a full run.
pub struct TrainOutcome {
    pub policy: Policy,
    pub best: Policy,
    /// Iteration at which the trailing mean episode reward peaked.
    pub best_iteration: usize,
    pub curve: Vec<IterationRecord>,
}

/// Where [`train`] writes its artifacts.
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub dir: PathBuf,
}

impl RunFiles {
    pub fn curve(&self) -> PathBuf {
        self.dir.join(CURVE_FILE)
    }

    pub fn best(&self) -> PathBuf {
        self.dir.join(BEST_CHECKPOINT)
    }

    pub fn last(&self) -> PathBuf {
        self.dir.join(FINAL_CHECKPOINT)
    }
}

pub fn write_curve(path: &Path, curve: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in curve {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every configured iteration. `on_iteration` sees each record as it is
/// produced. With `out`, the curve and the best and final checkpoints are
/// written there.
pub fn train<E: Environment>(
    cfg: &PpoConfig,
    policy: Policy,
    env: E,
    out: Option<&Path>,
    mut on_iteration: impl FnMut(&IterationRecord),
) -> Result<TrainOutcome> {
    let files = out.map(|d| RunFiles { dir: d.to_path_buf() });
    if let Some(f) = &files {
        fs::create_dir_all(&f.dir)?;
    }
    let mut trainer = Trainer::new(cfg.clone(), policy, env)?;
    let mut best = trainer.policy().clone();
    let mut best_score = f64::NEG_INFINITY;
    let mut best_iteration = 0;
    let mut window = VecDeque::with_capacity(cfg.best_window);
    let mut curve = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let rec = trainer.step()?;
        on_iteration(&rec);
        if let Some(r) = rec.mean_episode_reward {
            if window.len() == cfg.best_window {
                window.pop_front();
            }
            window.push_back(r);
        }
        let score = window.iter().sum::<f64>() / window.len().max(1) as f64;
        if rec.mean_episode_reward.is_some() && window.len() == cfg.best_window && score > best_score {
            best_score = score;
            best_iteration = rec.iteration;
            best = trainer.policy().clone();
            if let Some(f) = &files {
                best.save(&f.best())?;
            }
        }
        curve.push(rec);
    }
    let policy = trainer.into_policy();
    if best_score == f64::NEG_INFINITY {
        best = policy.clone();
        best_iteration = curve.len() - 1;
    }
    if let Some(f) = &files {
        if !f.best().exists() {
            best.save(&f.best())?;
        }
        policy.save(&f.last())?;
        write_curve(&f.curve(), &curve)?;
    }
    Ok(TrainOutcome {
        policy,
        best,
        best_iteration,
        curve,
    })
}
