//! Proximal policy optimization for the checkpoint decision process.
//!
//! A [`Collector`] samples fixed-size rollouts from any
//! [`Environment`](lullaby_core::env::Environment), carrying unfinished
//! episodes across updates and bootstrapping their tails with the critic.
//! [`Trainer`] turns each rollout into GAE advantages and runs several epochs
//! of the clipped objective with Adam; [`train`] wraps the loop and writes the
//! learning curve and checkpoints.

mod advantage;
mod config;
mod error;
mod loss;
mod rollout;
mod train;

pub use advantage::{discounted_returns, gae_advantages, normalize, rewards_to_go};
pub use config::PpoConfig;
pub use error::{Error, Result};
pub use loss::{clipped_surrogate, ppo_losses, Batch, LossCoefficients, LossStats};
pub use rollout::{Collector, EpisodeStats, RolloutBuffer};
pub use train::{
    train, write_curve, IterationRecord, RunFiles, TrainOutcome, Trainer, BEST_CHECKPOINT, CURVE_FILE, FINAL_CHECKPOINT,
};
