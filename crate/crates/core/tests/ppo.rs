use coachnet::env::{self, EnvSpec};
use coachnet::numcore::{gradcheck, Adam, Matrix, ParamGraph, Rng, Tape};
use coachnet::ppo::{
    compute_gae, gaussian_log_prob, ppo_loss, ppo_update, snapshot, AgentContext, Batch, GaeStep, PolicyModel,
    PpoConfig, Trainer, LOG_STD_MAX, LOG_STD_MIN,
};
use proptest::prelude::*;

fn small_policy(seed: u64) -> PolicyModel {
    PolicyModel::new(2, 1, &[5, 4], 0.2, &mut Rng::new(seed)).unwrap()
}

/// Random batch whose old log-probs sit near the current ones so some ratios
/// fall inside the clip band and some outside.
fn random_batch(policy: &PolicyModel, n: usize, rng: &mut Rng) -> Batch {
    let mut obs = Vec::new();
    let mut actions = Vec::new();
    let mut old = Vec::new();
    for _ in 0..n {
        let o = vec![rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
        let s = policy.act(&o, rng).unwrap();
        old.push(s.log_prob + rng.uniform(-0.4, 0.4));
        obs.push(o);
        actions.push(s.action);
    }
    Batch {
        observations: Matrix::from_rows(&obs).unwrap(),
        actions: Matrix::from_rows(&actions).unwrap(),
        log_probs_old: old,
        advantages: (0..n).map(|_| rng.normal(0.0, 1.0)).collect(),
        returns: (0..n).map(|_| rng.normal(0.0, 1.0)).collect(),
        values_old: vec![0.0; n],
    }
}

fn loss_grad(policy: &mut PolicyModel, batch: &Batch, vc: f64, ec: f64) {
    let mut tape = Tape::new();
    let loss = ppo_loss(&mut tape, policy, batch, 0.2, vc, ec).unwrap();
    policy.graph.zero_grad();
    tape.backward(loss.total, &mut policy.graph).unwrap();
}

#[test]
fn clipped_objective_matches_finite_differences() {
    for seed in [31, 32, 33] {
        let mut policy = small_policy(seed);
        let batch = random_batch(&policy, 6, &mut Rng::new(seed + 100));
        let shape = policy.clone();
        let mut graph = policy.graph.clone();
        let report = gradcheck::check(
            &mut graph,
            1e-5,
            |g| {
                policy.graph = g.clone();
                loss_grad(&mut policy, &batch, 0.5, 0.01);
                *g = policy.graph.clone();
                Ok(())
            },
            |g: &ParamGraph| {
                let mut p = shape.clone();
                p.graph = g.clone();
                let mut tape = Tape::new();
                let l = ppo_loss(&mut tape, &p, &batch, 0.2, 0.5, 0.01)?;
                Ok(tape.value(l.total).item())
            },
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-3, "seed {seed}: {report:?}");
    }
}

#[test]
fn unit_ratio_gradient_is_the_vanilla_policy_gradient() {
    let mut policy = small_policy(5);
    let mut batch = random_batch(&policy, 8, &mut Rng::new(6));
    let (mean, _) = policy.infer(&batch.observations).unwrap();
    for i in 0..batch.len() {
        batch.log_probs_old[i] = gaussian_log_prob(batch.actions.row(i), mean.row(i), policy.log_std());
    }
    loss_grad(&mut policy, &batch, 0.0, 0.0);
    let ppo = policy.graph.flat_grads();

    policy.graph.zero_grad();
    let mut tape = Tape::new();
    let obs = tape.input(batch.observations.clone());
    let nodes = policy.forward(&mut tape, obs).unwrap();
    let logp = policy.log_prob_on_tape(&mut tape, &nodes, batch.actions.clone()).unwrap();
    let weighted = tape.mul_const(logp, Matrix::from_vec(8, 1, batch.advantages.clone()).unwrap()).unwrap();
    let m = tape.mean(weighted);
    let loss = tape.scale(m, -1.0);
    tape.backward(loss, &mut policy.graph).unwrap();
    let vanilla = policy.graph.flat_grads();

    for (a, b) in ppo.iter().zip(&vanilla) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
    }
    assert!(vanilla.iter().any(|g| g.abs() > 1e-6));
}

#[test]
fn saturated_clip_gives_zero_gradient() {
    let mut policy = small_policy(8);
    let obs = vec![0.3, -0.2];
    let s = policy.act(&obs, &mut Rng::new(9)).unwrap();
    let batch = Batch {
        observations: Matrix::row_vector(obs),
        actions: Matrix::row_vector(s.action),
        log_probs_old: vec![s.log_prob - 0.5],
        advantages: vec![1.0],
        returns: vec![0.0],
        values_old: vec![0.0],
    };
    loss_grad(&mut policy, &batch, 0.0, 0.0);
    assert!(policy.graph.flat_grads().iter().all(|&g| g == 0.0));
}

#[test]
fn one_update_moves_the_policy() {
    let mut policy = small_policy(12);
    let batch = random_batch(&policy, 128, &mut Rng::new(13));
    let cfg = PpoConfig {
        minibatch: 32,
        epochs: 3,
        lr: 1e-2,
        ..PpoConfig::default()
    };
    let mut adam = Adam::with_lr(cfg.lr);
    let stats = ppo_update(&mut policy, &mut adam, &batch, &cfg, &mut Rng::new(14)).unwrap();
    assert!(stats.approx_kl > 0.0, "{stats:?}");
    assert!((0.0..=1.0).contains(&stats.clip_fraction));
    assert_eq!(stats.minibatches, 12);
}

#[test]
fn entropy_is_the_closed_form() {
    let mut policy = small_policy(1);
    let id = policy.log_std_id();
    policy.graph.value_mut(id).set(0, 0, 0.3);
    let closed = 0.3 + 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    assert_eq!(policy.entropy(), closed);
    let batch = random_batch(&policy, 4, &mut Rng::new(2));
    let mut tape = Tape::new();
    let l = ppo_loss(&mut tape, &policy, &batch, 0.2, 0.5, 0.0).unwrap();
    assert_eq!(l.entropy, closed);
}

#[test]
fn checkpoint_round_trip_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let spec = EnvSpec::tiltpole();
    let mut trainer = Trainer::new(spec.clone(), PpoConfig { batch_steps: 256, ..PpoConfig::default() }, &Rng::new(3), 1e5).unwrap();
    for _ in 0..3 {
        trainer.run_episode(0).unwrap();
    }
    let path = dir.path().join("policy.ckpt");
    trainer.policy.save(&trainer.ctx, &path).unwrap();
    let (loaded, ctx) = PolicyModel::load(&path).unwrap();
    assert!(loaded.graph.same_values(&trainer.policy.graph));
    assert_eq!(ctx, trainer.ctx);
    assert!(ctx.age_timesteps > 0);

    let play = |p: &PolicyModel| {
        let mut rng = Rng::new(77);
        let mut noise = rng.substream(1);
        env::rollout(&spec, |o| p.act(o, &mut noise).unwrap().action, &mut rng, 400).unwrap()
    };
    assert_eq!(play(&trainer.policy), play(&loaded));
}

#[test]
fn untrained_snapshot_has_zero_age() {
    let policy = small_policy(4);
    let blob = snapshot(&policy, &AgentContext::default());
    assert_eq!(blob.meta_parse::<u64>("age_timesteps").unwrap(), 0);
    let (_, ctx) = PolicyModel::from_snapshot(&blob).unwrap();
    assert_eq!(ctx.age_timesteps, 0);
}

#[test]
fn trainer_age_counts_every_step() {
    let mut trainer = Trainer::new(EnvSpec::tiltpole(), PpoConfig { batch_steps: 40, ..PpoConfig::default() }, &Rng::new(8), 1e5).unwrap();
    let mut total = 0;
    for _ in 0..5 {
        total += trainer.run_episode(0).unwrap().summary.length as u64;
    }
    assert_eq!(trainer.age(), total);
    assert!(!trainer.updates.is_empty());
}

#[test]
fn gae_three_step_hand_unrolled() {
    // γ = 0.5, λ = 0.5, V = [1, 1, 1], r = [1, 2, 3], last step terminal.
    // δ = [0.5, 1.5, 2.0]; A2 = 2.0, A1 = 1.5 + 0.25·2 = 2.0, A0 = 0.5 + 0.25·2 = 1.0
    let steps = [
        GaeStep { reward: 1.0, value: 1.0, done: false },
        GaeStep { reward: 2.0, value: 1.0, done: false },
        GaeStep { reward: 3.0, value: 1.0, done: true },
    ];
    let (adv, ret) = compute_gae(&steps, 5.0, 0.5, 0.5).unwrap();
    assert_eq!(adv, vec![1.0, 2.0, 2.0]);
    assert_eq!(ret, vec![2.0, 3.0, 3.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn log_std_stays_clamped(seed in 0u64..1000, lr in 1e-3f64..5.0, shift in -50.0f64..50.0) {
        let mut policy = small_policy(seed);
        let mut batch = random_batch(&policy, 16, &mut Rng::new(seed ^ 0xabc));
        for a in &mut batch.advantages {
            *a *= shift;
        }
        let cfg = PpoConfig { lr, minibatch: 8, epochs: 2, max_grad_norm: 0.0, ..PpoConfig::default() };
        let mut adam = Adam::with_lr(lr);
        if ppo_update(&mut policy, &mut adam, &batch, &cfg, &mut Rng::new(seed)).is_ok() {
            for &s in policy.log_std() {
                prop_assert!((LOG_STD_MIN..=LOG_STD_MAX).contains(&s));
            }
        }
    }

    #[test]
    fn normalized_advantages_are_standardized(xs in proptest::collection::vec(-100.0f64..100.0, 2..50)) {
        prop_assume!(xs.iter().any(|&x| (x - xs[0]).abs() > 1e-3));
        let n = xs.len();
        let mut b = Batch {
            observations: Matrix::zeros(n, 1),
            actions: Matrix::zeros(n, 1),
            log_probs_old: vec![0.0; n],
            advantages: xs,
            returns: vec![0.0; n],
            values_old: vec![0.0; n],
        };
        b.normalize_advantages();
        let mean = b.advantages.iter().sum::<f64>() / n as f64;
        let var = b.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
        prop_assert!(mean.abs() < 1e-9);
        prop_assert!((var.sqrt() - 1.0).abs() < 1e-6);
    }
}
