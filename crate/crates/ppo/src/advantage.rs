//! Discounted returns and generalized advantage estimates over a flat buffer
//! in which `dones[t]` marks the last step of an episode.

/// Discounted returns that reset after every done flag. The tail of the
/// buffer, if it is mid-episode, is continued with `bootstrap`.
pub fn discounted_returns(rewards: &[f64], dones: &[bool], gamma: f64, bootstrap: f64) -> Vec<f64> {
    assert_eq!(rewards.len(), dones.len(), "rewards and dones differ in length");
    let mut out = vec![0.0; rewards.len()];
    let mut running = bootstrap;
    for t in (0..rewards.len()).rev() {
        if dones[t] {
            running = 0.0;
        }
        running = rewards[t] + gamma * running;
        out[t] = running;
    }
    out
}

pub fn rewards_to_go(rewards: &[f64], dones: &[bool], gamma: f64) -> Vec<f64> {
    discounted_returns(rewards, dones, gamma, 0.0)
}

/// GAE(lambda). `values[t]` estimates the state before step `t`;
/// `last_value` estimates the state after the final step.
pub fn gae_advantages(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n, "buffer columns differ in length");
    let mut out = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next = if t + 1 < n { values[t + 1] } else { last_value };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next * live - values[t];
        running = delta + gamma * lambda * live * running;
        out[t] = running;
    }
    out
}

/// Shifts to zero mean and scales to unit variance. A constant input maps to zeros.
pub fn normalize(xs: &[f64]) -> Vec<f64> {
    if xs.is_empty() {
        return Vec::new();
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    xs.iter().map(|x| (x - mean) / (std + 1e-8)).collect()
}
