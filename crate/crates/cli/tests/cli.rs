use std::process::{Command, Output};

fn coachnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coachnet")).args(args).output().unwrap()
}

#[test]
fn selftest_passes() {
    let out = coachnet(&["selftest"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.lines().count() >= 9);
    assert!(stdout.lines().all(|l| l.starts_with("PASS ")), "{stdout}");
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let unknown = coachnet(&["stage1", "--out", out, "--set", "sampler.beta=1"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("sampler.beta"));

    let cfg = dir.path().join("bad.conf");
    std::fs::write(&cfg, "sampler.mu0=1.5\n").unwrap();
    let invalid = coachnet(&["stage2", "--mode", "adv", "--out", out, "--config", cfg.to_str().unwrap()]);
    assert_eq!(invalid.status.code(), Some(2));
}

#[test]
fn missing_stage1_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = coachnet(&["stage2", "--mode", "vmc", "--seed", "4", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("stage1 --seed 4"), "{stderr}");
}

#[test]
fn shipped_config_matches_the_defaults() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/tiltpole.conf");
    let shipped = coachnet::harness::ExperimentConfig::load(std::path::Path::new(path)).unwrap();
    let builtin = coachnet::harness::ExperimentConfig::for_env(coachnet::env::EnvKind::TiltPole);
    assert_eq!(shipped, builtin);
}
