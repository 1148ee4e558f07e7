use lullaby_core::domain::{
    build_observation, denormalize_state, normalize_state, reward, FeatureScales, RewardConfig, StateVector, STATE_DIM,
};
use lullaby_core::occupant::{motion_features, window_wake_check, ImuStream, WakeDetector, WakeDetectorConfig};
use proptest::prelude::*;

fn state_strategy() -> impl Strategy<Value = StateVector> {
    proptest::array::uniform14(0.0f64..30.0).prop_map(StateVector::from_array)
}

proptest! {
    #[test]
    fn reward_is_bounded_and_monotone(a in 1e-6f64..2.0, b in 1e-6f64..2.0, th in 0.05f64..0.95, beta in 0.1f64..10.0) {
        let cfg = RewardConfig { epsilon_th: th, beta };
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (rl, rh) = (reward(lo, &cfg).unwrap(), reward(hi, &cfg).unwrap());
        prop_assert!((0.0..=1.0).contains(&rl) && (0.0..=1.0).contains(&rh));
        prop_assert!(rl <= rh);
    }

    #[test]
    fn observation_always_has_k_columns(n in 1usize..20, k in 1usize..10) {
        let history: Vec<StateVector> = (0..n).map(|i| StateVector { s_lmt: 1.0 + i as f64, ..Default::default() }).collect();
        let obs = build_observation(&history, k).unwrap();
        prop_assert_eq!(obs.columns.len(), k);
        prop_assert_eq!(obs.columns.last(), history.last());
        let first = n.saturating_sub(k);
        prop_assert_eq!(&obs.columns[k - (n - first)..], &history[first..]);
    }

    #[test]
    fn normalization_round_trips_inside_the_range(v in state_strategy()) {
        let scales = FeatureScales { min: [0.0; STATE_DIM], max: [30.0; STATE_DIM] };
        let back = denormalize_state(&normalize_state(&v, &scales), &scales).to_array();
        for (x, y) in v.to_array().iter().zip(back) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn normalized_features_lie_in_the_unit_interval(v in state_strategy()) {
        prop_assert!(normalize_state(&v, &FeatureScales::default()).iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn raising_a_sample_never_puts_the_occupant_back_to_sleep(
        samples in proptest::collection::vec(0.0f64..3.0, 1..600),
        pick in any::<prop::sample::Index>(),
        bump in 0.0f64..3.0,
    ) {
        let cfg = WakeDetectorConfig::default();
        let before = window_wake_check(&ImuStream::new(samples.clone()), &cfg);
        let mut raised = samples;
        let i = pick.index(raised.len());
        raised[i] += bump;
        let after = window_wake_check(&ImuStream::new(raised), &cfg);
        prop_assert!(!before || after);
    }

    #[test]
    fn streaming_detector_agrees_with_the_window_check(
        samples in proptest::collection::vec(0.0f64..2.2, 1..800),
        window in 1usize..400,
    ) {
        let cfg = WakeDetectorConfig { window, threshold: 2.0 };
        let mut det = WakeDetector::new(cfg);
        for n in 1..=samples.len() {
            let streamed = det.push(samples[n - 1]);
            prop_assert_eq!(streamed, window_wake_check(&ImuStream::new(samples[..n].to_vec()), &cfg));
        }
    }

    #[test]
    fn max_motion_dominates_average(samples in proptest::collection::vec(0.0f64..5.0, 1..500)) {
        let (m_max, m_avg) = motion_features(&samples).unwrap();
        prop_assert!(m_max >= m_avg && m_avg >= 0.0);
    }
}
