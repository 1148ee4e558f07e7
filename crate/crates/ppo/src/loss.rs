use lullaby_autodiff::{Graph, Tensor, Var};
use lullaby_core::env::PolicyInput;
use lullaby_nets::Policy;
use rand::Rng;

use crate::error::{Error, Result};

/// Per-sample clipped surrogate `min(r A, clip(r, 1 - eps, 1 + eps) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * advantage)
}

/// Samples entering one gradient step.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub observations: &'a [PolicyInput],
    pub actions: &'a [usize],
    pub old_log_probs: &'a [f64],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCoefficients {
    pub clip_eps: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

/// Scalar readouts of the loss graph.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossStats {
    /// Mean clipped surrogate (the maximized objective).
    pub clip_objective: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total: f64,
    pub mean_ratio: f64,
    /// Share of samples whose ratio left the trust region.
    pub clip_fraction: f64,
}

fn column(g: &mut Graph, xs: &[f64]) -> Result<Var> {
    Ok(g.constant(Tensor::from_vec(xs.len(), 1, xs.to_vec())?))
}

/// Builds `-L_clip + value_coef * L_vf - entropy_coef * H` on `g`.
pub fn ppo_losses<R: Rng + ?Sized>(
    g: &mut Graph,
    policy: &Policy,
    batch: &Batch<'_>,
    coef: &LossCoefficients,
    train: bool,
    rng: &mut R,
) -> Result<(Var, LossStats)> {
    let n = batch.actions.len();
    let fwd = policy.forward(g, batch.observations, train, rng)?;
    let log_probs = g.log_softmax(fwd.logits)?;
    let chosen = g.pick(log_probs, batch.actions)?;
    for (t, (&new, &old)) in g.value(chosen).data().iter().zip(batch.old_log_probs).enumerate() {
        if !(new - old).exp().is_finite() {
            return Err(Error::NonFiniteRatio { step: t, new, old });
        }
    }
    let old = column(g, batch.old_log_probs)?;
    let adv = column(g, batch.advantages)?;
    let returns = column(g, batch.returns)?;

    let diff = g.sub(chosen, old)?;
    let ratio = g.exp(diff)?;
    let unclipped = g.mul(ratio, adv)?;
    let clipped_ratio = g.clamp(ratio, 1.0 - coef.clip_eps, 1.0 + coef.clip_eps)?;
    let clipped = g.mul(clipped_ratio, adv)?;
    let surrogate = g.minimum(unclipped, clipped)?;
    let l_clip = g.mean(surrogate)?;

    let err = g.sub(fwd.values, returns)?;
    let sq = g.square(err)?;
    let l_vf = g.mean(sq)?;

    let probs = g.exp(log_probs)?;
    let plogp = g.mul(probs, log_probs)?;
    let neg_h = g.sum(plogp)?;
    let entropy = g.scale(neg_h, -1.0 / n as f64)?;

    let a = g.scale(l_clip, -1.0)?;
    let b = g.scale(l_vf, coef.value_coef)?;
    let c = g.scale(entropy, -coef.entropy_coef)?;
    let ab = g.add(a, b)?;
    let total = g.add(ab, c)?;

    let ratios = g.value(ratio).data();
    let outside = ratios.iter().filter(|r| (*r - 1.0).abs() > coef.clip_eps).count();
    let stats = LossStats {
        clip_objective: g.value(l_clip).item(),
        value_loss: g.value(l_vf).item(),
        entropy: g.value(entropy).item(),
        total: g.value(total).item(),
        mean_ratio: ratios.iter().sum::<f64>() / n as f64,
        clip_fraction: outside as f64 / n as f64,
    };
    Ok((total, stats))
}
