use lullaby_core::env::{Environment, PolicyInput};
use lullaby_nets::{ActMode, Policy};
use rand::Rng;

use crate::advantage::{discounted_returns, gae_advantages, normalize};
use crate::error::{Error, Result};

/// Summary of an episode that ended inside a rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStats {
    pub total_reward: f64,
    pub length: usize,
    pub woke: bool,
}

/// A fixed number of transitions, possibly spanning several episodes.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub observations: Vec<PolicyInput>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub woke: Vec<bool>,
    /// Critic value of the observation after the last step; zero when that
    /// step ended an episode.
    pub last_value: f64,
    pub episodes: Vec<EpisodeStats>,
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// Fills `returns` (bootstrapped rewards-to-go) and `advantages`.
    pub fn compute_targets(&mut self, gamma: f64, lambda: f64, normalize_advantages: bool) {
        self.returns = discounted_returns(&self.rewards, &self.dones, gamma, self.last_value);
        let adv = gae_advantages(&self.rewards, &self.values, &self.dones, self.last_value, gamma, lambda);
        self.advantages = if normalize_advantages { normalize(&adv) } else { adv };
    }
}

/// Drives an environment across rollouts; an unfinished episode carries over
/// into the next call.
pub struct Collector<E> {
    env: E,
    current: Option<PolicyInput>,
    episode: usize,
    episode_step: usize,
    episode_reward: f64,
}

impl<E: Environment> Collector<E> {
    pub fn new(env: E) -> Self {
        Self {
            env,
            current: None,
            episode: 0,
            episode_step: 0,
            episode_reward: 0.0,
        }
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    pub fn env_mut(&mut self) -> &mut E {
        &mut self.env
    }

    pub fn into_env(self) -> E {
        self.env
    }

    /// Episodes started so far.
    pub fn episodes_started(&self) -> usize {
        self.episode
    }

    fn env_error(&self, source: lullaby_core::Error) -> Error {
        Error::Environment {
            episode: self.episode,
            step: self.episode_step,
            source,
        }
    }

    /// Samples `steps` transitions from `policy`.
    pub fn collect<R: Rng + ?Sized>(&mut self, policy: &Policy, steps: usize, rng: &mut R) -> Result<RolloutBuffer> {
        let mut buf = RolloutBuffer::default();
        for _ in 0..steps {
            let obs = match self.current.take() {
                Some(o) => o,
                None => {
                    self.episode += 1;
                    self.episode_step = 0;
                    self.episode_reward = 0.0;
                    self.env.reset().map_err(|e| self.env_error(e))?
                }
            };
            let d = policy.act(&obs, ActMode::Sample, rng)?;
            let out = self.env.step(d.action).map_err(|e| self.env_error(e))?;
            self.episode_step += 1;
            self.episode_reward += out.reward;
            buf.observations.push(obs);
            buf.actions.push(d.action);
            buf.log_probs.push(d.log_prob);
            buf.values.push(d.value);
            buf.rewards.push(out.reward);
            buf.dones.push(out.done);
            buf.woke.push(out.woke);
            if out.done {
                buf.episodes.push(EpisodeStats {
                    total_reward: self.episode_reward,
                    length: self.episode_step,
                    woke: out.woke,
                });
            } else {
                self.current = Some(out.observation);
            }
        }
        buf.last_value = match &self.current {
            Some(o) => policy.evaluate(o)?.value,
            None => 0.0,
        };
        Ok(buf)
    }
}
