use std::fs;
use std::path::Path;

use coachnet::env::{EnvKind, EnvSpec};
use coachnet::harness::{
    compare_runs, eval_initial_states, evaluate, run_dir, run_stage1, run_stage2, stage1_dir, ExperimentConfig, Mode,
    COMPARISON_HEADER, METRICS_HEADER,
};
use coachnet::numcore::Rng;
use coachnet::ppo::PolicyModel;
use coachnet::Error;

const TINY: &str = "
env.name=tiltpole
run.seeds=0
stage1.r_threshold=0
stage1.max_steps=50000
stage1.n_sequences=80
stage1.horizon=16
stage1.subsample_target=100
coach.rnn_widths=8
coach.head_widths=8
coach.epochs=2
coach.finetune_epochs=1
sampler.m_period=10
sampler.schedule_steps=3000
ppo.batch_steps=512
ppo.epochs=2
stage2.total_steps=3000
stage2.checkpoint_interval=1000
stage2.report_interval=500
eval.episodes=4
";

fn tiny() -> ExperimentConfig {
    ExperimentConfig::parse(TINY).unwrap()
}

fn read_tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn pipeline(cfg: &ExperimentConfig, out: &Path) {
    run_stage1(cfg, 0, out).unwrap();
    run_stage2(cfg, 0, out, Mode::Vmc).unwrap();
    run_stage2(cfg, 0, out, Mode::Adv).unwrap();
}

#[test]
fn config_text_is_canonical_and_hashed() {
    let cfg = tiny();
    assert_eq!(cfg.n_sequences, 80);
    assert_eq!(cfg.coach.horizon, 16);
    let again = ExperimentConfig::parse(&cfg.to_text()).unwrap();
    assert_eq!(again, cfg);
    assert_eq!(again.hash(), cfg.hash());
    let mut other = cfg.clone();
    other.set("sampler.alpha", "2").unwrap();
    assert_ne!(other.hash(), cfg.hash());
}

#[test]
fn invalid_configs_map_to_exit_code_two() {
    let bad = [
        "stage1.horizon=500",
        "stage1.l=16\nstage1.horizon=16",
        "sampler.mu0=0",
        "stage1.ratio_lo=0.8",
        "coach.variant=transformer",
        "no_equals_sign",
    ];
    for text in bad {
        let err = ExperimentConfig::parse(text)
            .and_then(|c| c.validate().map(|_| c))
            .expect_err(text);
        assert_eq!(err.exit_code(), 2, "{text}: {err}");
    }
}

#[test]
fn evaluation_is_paired_and_repeatable() {
    let spec = EnvSpec::tiltpole();
    let a = eval_initial_states(&spec, 77, 20);
    let b = eval_initial_states(&spec, 77, 20);
    assert_eq!(a, b);
    assert_ne!(a, eval_initial_states(&spec, 78, 20));

    let policy = PolicyModel::new(2, 1, &[8], 0.0, &mut Rng::new(1)).unwrap();
    let r1 = evaluate(&policy, &spec, 20, 77, false, 5).unwrap();
    let r2 = evaluate(&policy, &spec, 20, 77, false, 5).unwrap();
    assert_eq!(r1, r2);
    assert!(r1.failures <= 20);
    assert_eq!(r1.episodes, 20);
    assert!(r1.min_length as f64 <= r1.mean_length && r1.mean_length <= r1.max_length as f64);
}

#[test]
fn evaluation_rejects_mismatched_checkpoint() {
    let spec = EnvSpec::by_kind(EnvKind::SlipperySlope);
    let policy = PolicyModel::new(2, 1, &[8], 0.0, &mut Rng::new(1)).unwrap();
    assert!(matches!(evaluate(&policy, &spec, 3, 1, false, 0), Err(Error::Shape { .. })));
}

#[test]
fn stage2_without_stage1_names_the_missing_step() {
    let dir = tempfile::tempdir().unwrap();
    let err = run_stage2(&tiny(), 3, dir.path(), Mode::Adv).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("stage1 --seed 3"), "{err}");
}

#[test]
fn unreachable_threshold_leaves_partial_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny();
    cfg.set("stage1.r_threshold", "1e9").unwrap();
    cfg.set("stage1.max_steps", "2000").unwrap();
    let err = run_stage1(&cfg, 0, dir.path()).unwrap_err();
    assert!(matches!(err, Error::ThresholdNotReached { .. }), "{err}");
    assert_ne!(err.exit_code(), 0);
    let s1 = stage1_dir(dir.path(), 0);
    assert!(s1.join("policy.ckpt").exists());
    let summary = fs::read_to_string(s1.join("summary.txt")).unwrap();
    assert!(summary.starts_with("status=threshold_not_reached"));
    assert!(!s1.join("coach.ckpt").exists());
}

#[test]
fn pipeline_is_byte_reproducible_and_self_comparison_is_flat() {
    let cfg = tiny();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(&cfg, a.path());
    pipeline(&cfg, b.path());
    let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
    assert_eq!(ta.iter().map(|f| &f.0).collect::<Vec<_>>(), tb.iter().map(|f| &f.0).collect::<Vec<_>>());
    for (fa, fb) in ta.iter().zip(&tb) {
        assert!(fa.1 == fb.1, "{} differs between identical runs", fa.0);
    }

    let manifest = fs::read_to_string(a.path().join("seed-0/manifest.txt")).unwrap();
    assert!(manifest.contains(&format!("config_sha256={}", cfg.hash())));
    assert!(manifest.contains(&cfg.to_text()));

    let vmc = run_dir(a.path(), 0, Mode::Vmc);
    let metrics = fs::read_to_string(vmc.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next(), Some(METRICS_HEADER));
    assert_eq!(metrics.lines().count(), 1 + 6);
    let ckpts: Vec<_> = fs::read_dir(vmc.join("checkpoints")).unwrap().collect();
    assert_eq!(ckpts.len(), 4);

    let out = a.path().join("self");
    let cmp = compare_runs(&[("self".into(), vmc.clone(), vmc.clone())], &out).unwrap();
    let csv = fs::read_to_string(out.join("comparison.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(COMPARISON_HEADER));
    for r in &cmp.rows {
        assert_eq!(r.vmc_reward, r.adv_reward);
        assert_eq!(r.vmc_failures, r.adv_failures);
        assert_eq!(r.vmc_reward_se, r.adv_reward_se);
    }
    for plot in ["train_reward.svg", "eval_failures.svg", "eval_reward.svg"] {
        let svg = fs::read_to_string(out.join("plots").join(plot)).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("<polyline"), "{plot}");
    }

    let adv = run_dir(a.path(), 0, Mode::Adv);
    compare_runs(&[("pair".into(), vmc.clone(), adv)], &a.path().join("pair")).unwrap();
}

#[test]
fn unit_floor_adv_run_writes_the_vmc_metrics() {
    let mut cfg = tiny();
    cfg.set("sampler.mu0", "1").unwrap();
    let dir = tempfile::tempdir().unwrap();
    pipeline(&cfg, dir.path());
    let read = |m: Mode, f: &str| fs::read(run_dir(dir.path(), 0, m).join(f)).unwrap();
    assert_eq!(read(Mode::Vmc, "metrics.csv"), read(Mode::Adv, "metrics.csv"));
    assert_eq!(read(Mode::Vmc, "eval.csv"), read(Mode::Adv, "eval.csv"));
}

#[test]
fn mismatched_checkpoint_grids_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny();
    run_stage1(&cfg, 0, dir.path()).unwrap();
    run_stage2(&cfg, 0, dir.path(), Mode::Vmc).unwrap();
    let mut coarse = cfg.clone();
    coarse.set("stage2.checkpoint_interval", "1500").unwrap();
    run_stage2(&coarse, 0, dir.path(), Mode::Adv).unwrap();
    let err = compare_runs(
        &[("x".into(), run_dir(dir.path(), 0, Mode::Vmc), run_dir(dir.path(), 0, Mode::Adv))],
        &dir.path().join("cmp"),
    )
    .unwrap_err();
    assert!(err.to_string().contains("grid"), "{err}");
}
