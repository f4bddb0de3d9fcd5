use coachnet::env::{reset, rollout, rollout_from, step, EnvSpec, EnvState};
use coachnet::numcore::Rng;
use proptest::prelude::*;

#[test]
fn reset_support_and_determinism() {
    let spec = EnvSpec::tiltpole();
    let mut rng = Rng::new(9);
    for _ in 0..1000 {
        let s = reset(&spec, &mut rng);
        assert!(s.observation[0] > -0.6 && s.observation[0] < 0.6);
        assert!(s.observation[1].is_finite());
        assert_eq!((s.step_index, s.done, s.failed), (0, false, false));
    }
    let a = reset(&spec, &mut Rng::new(77));
    let b = reset(&spec, &mut Rng::new(77));
    assert_eq!(a, b);
}

#[test]
fn heavy_tail_mass_matches_mixture() {
    // P(|ω| > 1) = 0.9·2Φ(-1/0.3) + 0.1·2Φ(-1/2), evaluated with scipy.
    let p = 0.062_479_816_344_951_686;
    let n = 10_000;
    let spec = EnvSpec::tiltpole();
    let mut rng = Rng::new(2024);
    let hits = (0..n)
        .filter(|_| reset(&spec, &mut rng).observation[1].abs() > 1.0)
        .count();
    let frac = hits as f64 / n as f64;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    assert!((frac - p).abs() < 3.0 * sigma, "{frac} vs {p}");
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (m, v)
}

#[test]
fn initial_state_moments() {
    let n = 10_000;
    let mut rng = Rng::new(31);
    let pole: Vec<_> = (0..n).map(|_| reset(&EnvSpec::tiltpole(), &mut rng).observation).collect();
    let slope: Vec<_> = (0..n).map(|_| reset(&EnvSpec::slipperyslope(), &mut rng).observation).collect();
    let col = |rows: &Vec<Vec<f64>>, i: usize| rows.iter().map(|r| r[i]).collect::<Vec<_>>();
    // (samples, analytic mean, analytic variance)
    let cases = [
        (col(&pole, 0), 0.0, 1.2f64.powi(2) / 12.0),
        (col(&pole, 1), 0.0, 0.9 * 0.09 + 0.1 * 4.0),
        (col(&slope, 0), 2.0, 4.0 / 12.0),
        (col(&slope, 1), 0.0, 0.25),
        (
            col(&slope, 2),
            0.9 * 0.05 + 0.1 * 0.00275,
            0.9 * (0.06f64.powi(2) / 12.0 + 0.05f64.powi(2)) + 0.1 * (0.0045f64.powi(2) / 12.0 + 0.00275f64.powi(2))
                - (0.9 * 0.05 + 0.1 * 0.00275f64).powi(2),
        ),
    ];
    for (i, (xs, mu, var)) in cases.iter().enumerate() {
        let (m, _) = mean_var(xs);
        let se = (var / n as f64).sqrt();
        assert!((m - mu).abs() < 3.5 * se, "case {i}: mean {m} vs {mu}");
    }
}

#[test]
fn upright_pole_with_zero_action_survives() {
    let spec = EnvSpec::tiltpole();
    let t = rollout_from(&spec, EnvState::at(vec![0.0, 0.0]), |_| vec![0.0], 250).unwrap();
    assert_eq!(t.len(), 250);
    assert!(!t.failed());
}

#[test]
fn falling_pole_fails_at_the_simulated_step() {
    // independent two-line Euler recurrence
    let (mut th, mut om) = (0.5f64, 1.0f64);
    let mut expected = 0;
    for k in 1..=400 {
        let th2 = th + 0.02 * om;
        om += 0.02 * 9.8 * th.sin();
        th = th2;
        if th.abs() > std::f64::consts::FRAC_PI_2 {
            expected = k;
            break;
        }
    }
    assert_eq!(expected, 23);
    let spec = EnvSpec::tiltpole();
    let t = rollout_from(&spec, EnvState::at(vec![0.5, 1.0]), |_| vec![0.0], 400).unwrap();
    assert!(t.failed());
    assert_eq!(t.len(), expected);
}

#[test]
fn euler_energy_drift_is_small() {
    let spec = EnvSpec::tiltpole();
    for theta0 in [-0.6, -0.3, -0.05, 0.001, 0.2, 0.6] {
        let start = EnvState::at(vec![theta0, 0.0]);
        let e0 = spec.pole_energy(&start.observation);
        let mut s = start;
        let mut worst = 0.0f64;
        while !s.done {
            step(&spec, &mut s, &[0.0]).unwrap();
            if !s.done {
                worst = worst.max((spec.pole_energy(&s.observation) - e0).abs() / e0.abs());
            }
        }
        assert!(worst < 0.05, "θ0={theta0}: drift {worst}");
    }
}

proptest! {
    #[test]
    fn rollout_invariants(seed in any::<u64>(), max_steps in 1usize..500, gain in -20.0f64..20.0, slope in any::<bool>()) {
        let spec = if slope { EnvSpec::slipperyslope() } else { EnvSpec::tiltpole() };
        let mut rng = Rng::new(seed);
        let t = rollout(&spec, |o| vec![-gain * o[0]], &mut rng, max_steps).unwrap();
        prop_assert!(t.len() <= max_steps);
        prop_assert!(t.len() <= spec.t_max);
        for (i, tr) in t.steps.iter().enumerate() {
            prop_assert!(tr.reward.is_finite());
            prop_assert!(!tr.failed || tr.done);
            if tr.done { prop_assert_eq!(i + 1, t.len()); }
            if i + 1 == spec.t_max { prop_assert!(!tr.failed); }
        }
        let again = rollout(&spec, |o| vec![-gain * o[0]], &mut Rng::new(seed), max_steps).unwrap();
        prop_assert_eq!(t, again);
    }
}
