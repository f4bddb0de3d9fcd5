use coachnet::collector::{
    balanced_subsample, harvest, recency_weight, train_until_threshold, LabeledSequence, SequenceStore, SubsampleSpec,
    REWARD_WINDOW,
};
use coachnet::env::EnvSpec;
use coachnet::numcore::Rng;
use coachnet::ppo::{HistoryStep, PpoConfig, Trainer};
use coachnet::Error;
use proptest::prelude::*;

fn history(len: usize, rng: &mut Rng) -> Vec<HistoryStep> {
    (0..len)
        .map(|_| HistoryStep {
            observation: vec![rng.normal(0.0, 1.0), rng.normal(0.0, 1.0)],
            phi: rng.unit(),
            action: vec![rng.normal(0.0, 1.0)],
        })
        .collect()
}

fn store_with(failures: usize, successes: usize, ages: impl Fn(usize) -> u64, rng: &mut Rng) -> SequenceStore {
    let mut store = SequenceStore::new(2, 8);
    for i in 0..failures + successes {
        let failed = i < failures;
        let len = if failed { 1 + rng.below(8) } else { 8 };
        let h = history(len, rng);
        store
            .push(LabeledSequence::from_history(&h, failed.then_some(len), 8, 2, ages(i)).unwrap())
            .unwrap();
    }
    store
}

#[test]
fn failure_at_step_three_pads_the_rest() {
    let mut rng = Rng::new(1);
    let h = history(3, &mut rng);
    let s = LabeledSequence::from_history(&h, Some(3), 8, 2, 0).unwrap();
    assert!(s.failed);
    assert_eq!(s.valid_len, 3);
    assert_eq!(s.label(), 1.0);
    let pad: f64 = s.observations[3..].iter().flatten().map(|x| x.abs()).sum::<f64>()
        + s.phi[3..].iter().map(|x| x.abs()).sum::<f64>();
    assert_eq!(pad, 0.0);
    for t in 0..3 {
        assert_eq!(s.observations[t], h[t].observation);
    }
}

#[test]
fn survivor_and_late_failure_are_label_zero() {
    let mut rng = Rng::new(2);
    let h = history(12, &mut rng);
    let alive = LabeledSequence::from_history(&h, None, 8, 2, 0).unwrap();
    let late = LabeledSequence::from_history(&h, Some(12), 8, 2, 0).unwrap();
    for s in [alive, late] {
        assert!(!s.failed);
        assert_eq!(s.valid_len, 8);
        assert_eq!(s.label(), 0.0);
    }
}

#[test]
fn harvested_labels_survive_replay() {
    let spec = EnvSpec::tiltpole();
    let cfg = PpoConfig {
        batch_steps: 256,
        epochs: 2,
        ..PpoConfig::default()
    };
    let mut trainer = Trainer::new(spec.clone(), cfg, &Rng::new(3), 1e6).unwrap();
    let age0 = trainer.age();
    let store = harvest(&mut trainer, 60, 16).unwrap();
    assert_eq!(store.len(), 60);
    assert!(store.failures() > 0 && store.successes() > 0, "{}", store.failures());
    for s in store.sequences() {
        assert_eq!(s.replay_label(&spec).unwrap(), s.failed);
        assert!(s.collected_at_age > age0);
    }
    assert!(!trainer.updates.is_empty(), "training continues while harvesting");
}

#[test]
fn threshold_outcome_is_explicit() {
    let spec = EnvSpec::tiltpole();
    let mut trainer = Trainer::new(spec.clone(), PpoConfig::default(), &Rng::new(4), 1e6).unwrap();
    let out = train_until_threshold(&mut trainer, f64::NEG_INFINITY, 1_000_000).unwrap();
    assert!(out.reached);
    assert_eq!(out.episodes, REWARD_WINDOW);
    assert_eq!(out.ctx.age_timesteps, trainer.age());
    let total: usize = trainer.episodes.iter().map(|e| e.length).sum();
    assert_eq!(total as u64, trainer.age());

    let mut trainer = Trainer::new(spec, PpoConfig::default(), &Rng::new(4), 1e6).unwrap();
    let out = train_until_threshold(&mut trainer, 1e9, 500).unwrap();
    assert!(!out.reached);
    assert!(trainer.age() >= 500);
}

#[test]
fn five_percent_failures_are_rebalanced_by_shrinking_successes() {
    let mut rng = Rng::new(5);
    let store = store_with(5, 95, |_| 0, &mut rng);
    let spec = SubsampleSpec {
        target_size: 100,
        ratio_lo: 0.3,
        ratio_hi: 0.7,
        half_life: 1000.0,
        age_now: 0,
    };
    let sub = balanced_subsample(&store, &spec, &mut rng).unwrap();
    assert_eq!(sub.failures(), 5);
    assert_eq!(sub.successes(), 11);
    assert!((0.3..=0.7).contains(&sub.failure_fraction()));
}

#[test]
fn single_label_store_cannot_be_balanced() {
    let mut rng = Rng::new(6);
    let store = store_with(0, 10, |_| 0, &mut rng);
    let spec = SubsampleSpec {
        target_size: 10,
        ratio_lo: 0.3,
        ratio_hi: 0.7,
        half_life: 10.0,
        age_now: 0,
    };
    assert!(matches!(balanced_subsample(&store, &spec, &mut rng), Err(Error::SingleLabel)));
}

/// Per-item selection counts over `repeats` subsamples.
fn selection_counts(store: &SequenceStore, spec: &SubsampleSpec, repeats: usize, rng: &mut Rng) -> Vec<usize> {
    // tag each sequence through its age so picks can be traced back
    let mut counts = vec![0; store.len()];
    for _ in 0..repeats {
        let sub = balanced_subsample(store, spec, rng).unwrap();
        for s in sub.sequences() {
            let i = store
                .sequences()
                .iter()
                .position(|t| t == s)
                .expect("subsample draws from the store");
            counts[i] += 1;
        }
    }
    counts
}

fn assert_uniform_within_classes(store: &SequenceStore, counts: &[usize], repeats: usize) {
    for failed in [true, false] {
        let idx: Vec<usize> = (0..store.len()).filter(|&i| store.get(i).failed == failed).collect();
        let total: usize = idx.iter().map(|&i| counts[i]).sum();
        let p = total as f64 / (repeats * idx.len()) as f64;
        let sigma = (repeats as f64 * p * (1.0 - p)).sqrt();
        for &i in &idx {
            let dev = (counts[i] as f64 - repeats as f64 * p).abs();
            assert!(dev <= 3.0 * sigma, "item {i}: {} vs expected {}", counts[i], repeats as f64 * p);
        }
    }
}

#[test]
fn equal_ages_give_uniform_selection() {
    let mut rng = Rng::new(7);
    let store = store_with(10, 10, |_| 500, &mut rng);
    let spec = SubsampleSpec {
        target_size: 10,
        ratio_lo: 0.3,
        ratio_hi: 0.7,
        half_life: 50.0,
        age_now: 1000,
    };
    let counts = selection_counts(&store, &spec, 1000, &mut rng);
    // class sizes are (7, 3): every failure is picked w.p. 0.7, every success w.p. 0.3
    assert_eq!(counts[..10].iter().sum::<usize>(), 7000);
    assert_eq!(counts[10..].iter().sum::<usize>(), 3000);
    assert_uniform_within_classes(&store, &counts, 1000);
}

#[test]
fn infinite_half_life_ignores_age() {
    let mut rng = Rng::new(8);
    let store = store_with(10, 10, |i| (i as u64) * 1000, &mut rng);
    assert_eq!(recency_weight(u64::MAX, 0, f64::INFINITY), 1.0);
    let spec = SubsampleSpec {
        target_size: 10,
        ratio_lo: 0.3,
        ratio_hi: 0.7,
        half_life: f64::INFINITY,
        age_now: 20_000,
    };
    let counts = selection_counts(&store, &spec, 1000, &mut rng);
    assert_uniform_within_classes(&store, &counts, 1000);
}

#[test]
fn short_half_life_prefers_recent_sequences() {
    let mut rng = Rng::new(9);
    let store = store_with(10, 10, |i| (i as u64 % 10) * 1000, &mut rng);
    let spec = SubsampleSpec {
        target_size: 10,
        ratio_lo: 0.3,
        ratio_hi: 0.7,
        half_life: 1000.0,
        age_now: 9000,
    };
    let counts = selection_counts(&store, &spec, 400, &mut rng);
    assert!(counts[9] > counts[0], "{counts:?}");
    assert!(counts[19] > counts[10], "{counts:?}");
}

#[test]
fn recency_weight_limits() {
    assert_eq!(recency_weight(100, 100, 7.0), 1.0);
    assert_eq!(recency_weight(100, 90, 10.0), 0.5);
    assert_eq!(recency_weight(100, 80, 10.0), 0.25);
    assert_eq!(recency_weight(1000, 0, f64::INFINITY), 1.0);
    assert!(recency_weight(1_000_000, 0, 1.0) < 1e-300);
}

#[test]
fn store_text_round_trip_is_exact() {
    let mut rng = Rng::new(10);
    let store = store_with(7, 13, |i| i as u64 * 37, &mut rng);
    let text = store.to_text();
    assert!(text.starts_with("COACHNET-SEQ v1\n"));
    let back = SequenceStore::from_text(&text).unwrap();
    assert_eq!(back, store);
    assert_eq!(back.to_text(), text);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.seq");
    store.save(&path).unwrap();
    assert_eq!(SequenceStore::load(&path).unwrap(), store);
}

#[test]
fn corrupted_store_is_rejected() {
    let mut rng = Rng::new(11);
    let store = store_with(2, 2, |_| 0, &mut rng);
    let text = store.to_text();
    assert!(SequenceStore::from_text(&text.replacen("COACHNET-SEQ v1", "COACHNET-SEQ v9", 1)).is_err());
    assert!(SequenceStore::from_text(&text[..text.len() / 2]).is_err());
}

#[test]
fn mismatched_sequence_is_refused() {
    let mut rng = Rng::new(12);
    let mut store = SequenceStore::new(2, 8);
    let h = history(10, &mut rng);
    let wrong_h = LabeledSequence::from_history(&h, None, 10, 2, 0).unwrap();
    assert!(store.push(wrong_h).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn subsample_fraction_stays_in_band(
        failures in 1usize..60,
        successes in 1usize..300,
        target in 2usize..200,
        lo in 0.1f64..0.45,
        hi in 0.55f64..0.9,
        seed in 0u64..1000,
    ) {
        let mut rng = Rng::new(seed);
        let store = store_with(failures, successes, |i| i as u64, &mut rng);
        let spec = SubsampleSpec { target_size: target, ratio_lo: lo, ratio_hi: hi, half_life: 50.0, age_now: 400 };
        let sub = balanced_subsample(&store, &spec, &mut rng).unwrap();
        let frac = sub.failure_fraction();
        prop_assert!(sub.len() <= target);
        prop_assert!(sub.failures() >= 1 && sub.successes() >= 1);
        prop_assert!(frac >= lo && frac <= hi, "fraction {} outside [{}, {}]", frac, lo, hi);
    }
}
