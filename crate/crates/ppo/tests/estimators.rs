use lullaby_ppo::{clipped_surrogate, gae_advantages, rewards_to_go};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Direct double sum over each episode.
fn brute_force_gae(r: &[f64], v: &[f64], dones: &[bool], last: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = r.len();
    let value_after = |u: usize| if u + 1 < n { v[u + 1] } else { last };
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            for u in t..n {
                let live = if dones[u] { 0.0 } else { 1.0 };
                let delta = r[u] + gamma * value_after(u) * live - v[u];
                total += (gamma * lambda).powi((u - t) as i32) * delta;
                if dones[u] {
                    break;
                }
            }
            total
        })
        .collect()
}

#[test]
fn gae_matches_the_nested_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..50 {
        let r: Vec<f64> = (0..5).map(|_| rng.random()).collect();
        let v: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d: Vec<bool> = (0..5).map(|_| rng.random_bool(0.3)).collect();
        let last = rng.random_range(-1.0..1.0);
        let fast = gae_advantages(&r, &v, &d, last, 0.99, 0.95);
        let slow = brute_force_gae(&r, &v, &d, last, 0.99, 0.95);
        for (a, b) in fast.iter().zip(slow) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn concatenated_episodes_do_not_mix() {
    let (r1, v1) = (vec![0.2, 0.5, 0.9], vec![0.1, 0.3, -0.2]);
    let (r2, v2) = (vec![0.7, 0.4], vec![0.6, 0.0]);
    let (d1, d2) = (vec![false, false, true], vec![false, true]);
    let joined = |a: &[f64], b: &[f64]| [a, b].concat();
    let dj = [d1.clone(), d2.clone()].concat();

    let g = rewards_to_go(&joined(&r1, &r2), &dj, 0.9);
    assert_eq!(g, [rewards_to_go(&r1, &d1, 0.9), rewards_to_go(&r2, &d2, 0.9)].concat());

    let a = gae_advantages(&joined(&r1, &r2), &joined(&v1, &v2), &dj, 0.0, 0.9, 0.8);
    let sep = [
        gae_advantages(&r1, &v1, &d1, 123.0, 0.9, 0.8),
        gae_advantages(&r2, &v2, &d2, 0.0, 0.9, 0.8),
    ]
    .concat();
    for (x, y) in a.iter().zip(sep) {
        assert!((x - y).abs() < 1e-15);
    }
}

proptest! {
    #[test]
    fn surrogate_never_exceeds_the_trust_region_bound(ratio in 0.0f64..5.0, adv in -10.0f64..10.0, eps in 0.01f64..0.99) {
        prop_assert!(clipped_surrogate(ratio, adv, eps) <= ratio * adv + adv.abs() * eps + 1e-12);
        prop_assert!(clipped_surrogate(ratio, adv, eps) <= ratio * adv + 1e-12);
    }

    #[test]
    fn returns_satisfy_the_bellman_recursion(rewards in prop::collection::vec(0.0f64..=1.0, 1..30), gamma in 0.0f64..=1.0) {
        let dones = vec![false; rewards.len()];
        let g = rewards_to_go(&rewards, &dones, gamma);
        for t in 0..rewards.len() {
            let next = g.get(t + 1).copied().unwrap_or(0.0);
            prop_assert!((g[t] - (rewards[t] + gamma * next)).abs() < 1e-12);
        }
    }
}
