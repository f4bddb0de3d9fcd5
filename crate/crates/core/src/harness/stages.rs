//! Stage runners and on-disk artifacts.
//!
//! ```text
//! <out>/seed-<s>/manifest.txt
//! <out>/seed-<s>/stage1/{policy.ckpt, coach.ckpt, coach_mlp.ckpt, sequences.seq,
//!                        summary.txt, coach_training.csv, separation.csv}
//! <out>/seed-<s>/<vmc|adv>/{manifest.txt, metrics.csv, eval.csv, coach.csv,
//!                           checkpoints/step-<n>.ckpt}
//! ```

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::config::ExperimentConfig;
use super::eval::{evaluate, EvalRow, EVAL_HEADER};
use crate::checkpoint::CheckpointBlob;
use crate::coachnet::{CoachConfig, CoachModel, SeparationReport, TrainingReport, Variant};
use crate::collector::{balanced_subsample, harvest, train_until_threshold, SequenceStore, SubsampleSpec, ThresholdOutcome};
use crate::error::{Error, Result};
use crate::numcore::Rng;
use crate::ppo::{PolicyModel, Trainer};
use crate::sampler::{adversarial_training_run, MetricsRow, RunOptions};

pub const METRICS_HEADER: &str =
    "step,episodes,mean_reward,failures,proposed,accepted,rejected,prefix_steps,full_steps,saved_steps_estimate,mu";
const COACH_LOG_HEADER: &str = "step,accepted,store_size,subsample_size,subsample_failures,heldout_auc,final_loss,status";

/// Independent streams split off each training seed.
mod stream {
    pub const STAGE1_TRAINER: u64 = 1;
    pub const SUBSAMPLE: u64 = 2;
    pub const COACH_INIT: u64 = 3;
    pub const COACH_TRAIN: u64 = 4;
    pub const MLP_INIT: u64 = 5;
    pub const STAGE2_TRAINER: u64 = 7;
    pub const SAMPLER: u64 = 8;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Vmc,
    Adv,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Vmc => "vmc",
            Mode::Adv => "adv",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vmc" => Ok(Mode::Vmc),
            "adv" => Ok(Mode::Adv),
            other => Err(Error::Config(format!("unknown mode `{other}` (expected vmc or adv)"))),
        }
    }
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

pub fn stage1_dir(out: &Path, seed: u64) -> PathBuf {
    seed_dir(out, seed).join("stage1")
}

pub fn run_dir(out: &Path, seed: u64, mode: Mode) -> PathBuf {
    seed_dir(out, seed).join(mode.to_string())
}

pub fn checkpoint_name(step: u64) -> String {
    format!("step-{step:08}.ckpt")
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn manifest(cfg: &ExperimentConfig, seed: u64, stage: &str) -> String {
    format!(
        "coachnet manifest v1\nstage={stage}\nseed={seed}\nconfig_sha256={}\n[config]\n{}",
        cfg.hash(),
        cfg.to_text()
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage1Report {
    pub threshold: ThresholdOutcome,
    pub harvested: usize,
    pub harvested_failures: usize,
    pub subsample_size: usize,
    pub subsample_failures: usize,
    pub half_life: f64,
    pub final_age: u64,
    /// Held-out separation of the configured variant.
    pub primary: Option<SeparationReport>,
    /// Held-out separation of the feed-forward ablation on the same split.
    pub ablation: Option<SeparationReport>,
}

/// Half-life used for recency weighting: the configured value or half the
/// age span of the stage-1 harvest.
pub fn resolve_half_life(cfg: &ExperimentConfig, store: &SequenceStore) -> f64 {
    cfg.half_life.unwrap_or_else(|| {
        let min = store.sequences().iter().map(|s| s.collected_at_age).min().unwrap_or(0);
        ((store.max_age() - min) as f64 / 2.0).max(1.0)
    })
}

/// Threshold training, harvest, balanced subsample and predictor training.
pub fn run_stage1(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<Stage1Report> {
    cfg.validate()?;
    let dir = stage1_dir(out, seed);
    mkdir(&dir)?;
    write(&seed_dir(out, seed).join("manifest.txt"), &manifest(cfg, seed, "stage1"))?;
    let root = Rng::new(seed);
    let spec = cfg.spec();
    let mut trainer = Trainer::new(spec.clone(), cfg.ppo.clone(), &root.substream(stream::STAGE1_TRAINER), cfg.phi_scale)?;
    let threshold = train_until_threshold(&mut trainer, cfg.r_threshold, cfg.stage1_max_steps)?;
    if !threshold.reached {
        trainer.policy.save(&trainer.ctx, &dir.join("policy.ckpt"))?;
        write(
            &dir.join("summary.txt"),
            &format!(
                "status=threshold_not_reached\nage={}\nmean_reward={:?}\n",
                trainer.age(),
                threshold.mean_reward
            ),
        )?;
        return Err(Error::ThresholdNotReached {
            threshold: cfg.r_threshold,
            steps: cfg.stage1_max_steps,
            best: threshold.mean_reward,
        });
    }
    let store = harvest(&mut trainer, cfg.n_sequences, cfg.coach.horizon)?;
    store.save(&dir.join("sequences.seq"))?;
    trainer.policy.save(&trainer.ctx, &dir.join("policy.ckpt"))?;

    let half_life = resolve_half_life(cfg, &store);
    let sub = balanced_subsample(
        &store,
        &SubsampleSpec {
            target_size: cfg.subsample_target,
            ratio_lo: cfg.ratio_lo,
            ratio_hi: cfg.ratio_hi,
            half_life,
            age_now: trainer.age(),
        },
        &mut root.substream(stream::SUBSAMPLE),
    )?;

    let mut training_csv = String::from("variant,epoch,total,l1,l2\n");
    let mut separation_csv = String::from("variant,auc,mean_failed,mean_success,n_failed,n_success\n");
    let mut log = |variant: Variant, report: &TrainingReport| {
        for (i, e) in report.epochs.iter().enumerate() {
            let _ = writeln!(training_csv, "{variant},{i},{:?},{:?},{:?}", e.total, e.l1, e.l2);
        }
        if let Some(h) = &report.heldout {
            let _ = writeln!(
                separation_csv,
                "{variant},{:?},{:?},{:?},{},{}",
                h.auc, h.mean_failed, h.mean_success, h.n_failed, h.n_success
            );
        }
    };

    let mut coach = CoachModel::new(cfg.coach.clone(), spec.obs_dim, &mut root.substream(stream::COACH_INIT))?;
    coach.fit_normalizer(&sub)?;
    let report = coach.train(&sub, cfg.coach_epochs, &mut root.substream(stream::COACH_TRAIN))?;
    log(cfg.coach.variant, &report);
    coach.save(&dir.join("coach.ckpt"))?;

    let ablation = if cfg.ablation {
        let other = match cfg.coach.variant {
            Variant::Wsp => Variant::Mlp,
            Variant::Mlp => Variant::Wsp,
        };
        let acfg = CoachConfig {
            variant: other,
            head_widths: match other {
                Variant::Wsp => CoachConfig::wsp(cfg.coach.horizon).head_widths,
                Variant::Mlp => CoachConfig::mlp(cfg.coach.horizon).head_widths,
            },
            ..cfg.coach.clone()
        };
        let mut model = CoachModel::new(acfg, spec.obs_dim, &mut root.substream(stream::MLP_INIT))?;
        model.fit_normalizer(&sub)?;
        // same stream as the primary model, so the held-out split matches
        let r = model.train(&sub, cfg.coach_epochs, &mut root.substream(stream::COACH_TRAIN))?;
        log(other, &r);
        model.save(&dir.join(format!("coach_{other}.ckpt")))?;
        r.heldout
    } else {
        None
    };
    write(&dir.join("coach_training.csv"), &training_csv)?;
    write(&dir.join("separation.csv"), &separation_csv)?;

    let result = Stage1Report {
        threshold,
        harvested: store.len(),
        harvested_failures: store.failures(),
        subsample_size: sub.len(),
        subsample_failures: sub.failures(),
        half_life,
        final_age: trainer.age(),
        primary: report.heldout,
        ablation,
    };
    write(
        &dir.join("summary.txt"),
        &format!(
            "status=ok\nthreshold_age={}\nthreshold_episodes={}\nthreshold_mean_reward={:?}\nharvested={}\nharvested_failures={}\nsubsample_size={}\nsubsample_failures={}\nhalf_life={:?}\nfinal_age={}\n",
            result.threshold.ctx.age_timesteps,
            result.threshold.episodes,
            result.threshold.mean_reward,
            result.harvested,
            result.harvested_failures,
            result.subsample_size,
            result.subsample_failures,
            result.half_life,
            result.final_age
        ),
    )?;
    Ok(result)
}

fn require(path: PathBuf, seed: u64) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact {
            path,
            hint: format!("run `coachnet stage1 --seed {seed}` with the same --config and --out first"),
        })
    }
}

fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let s = &r.stats;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{:?}",
            r.step,
            r.episodes,
            r.mean_reward.map_or(String::new(), |m| format!("{m:?}")),
            r.failures,
            s.proposed,
            s.accepted,
            s.rejected,
            s.prefix_steps,
            s.full_steps,
            s.saved_steps_estimate,
            r.mu
        );
    }
    out
}

/// Stage-2 training from the stage-1 policy, followed by evaluation of every
/// checkpoint. Returns the run directory.
pub fn run_stage2(cfg: &ExperimentConfig, seed: u64, out: &Path, mode: Mode) -> Result<PathBuf> {
    cfg.validate()?;
    let s1 = stage1_dir(out, seed);
    let policy_path = require(s1.join("policy.ckpt"), seed)?;
    let (policy, ctx) = PolicyModel::load(&policy_path)?;
    let spec = cfg.spec();
    let root = Rng::new(seed);
    let mut trainer = Trainer::with_policy(
        spec.clone(),
        cfg.ppo.clone(),
        policy,
        ctx,
        &root.substream(stream::STAGE2_TRAINER),
        cfg.phi_scale,
    )?;
    let mut store = SequenceStore::load(&require(s1.join("sequences.seq"), seed)?)?;
    let mut coach = match mode {
        Mode::Adv => Some(CoachModel::load(&require(s1.join("coach.ckpt"), seed)?)?),
        Mode::Vmc => None,
    };
    let opts = RunOptions {
        total_steps: cfg.stage2_steps,
        checkpoint_interval: cfg.checkpoint_interval,
        report_interval: cfg.report_interval,
        horizon: cfg.coach.horizon,
        subsample_target: cfg.subsample_target,
        ratio_lo: cfg.ratio_lo,
        ratio_hi: cfg.ratio_hi,
        half_life: resolve_half_life(cfg, &store),
        finetune_epochs: cfg.finetune_epochs,
    };
    let dir = run_dir(out, seed, mode);
    let ckpt_dir = dir.join("checkpoints");
    mkdir(&ckpt_dir)?;
    write(&dir.join("manifest.txt"), &manifest(cfg, seed, &format!("stage2-{mode}")))?;
    let artifacts = adversarial_training_run(
        &mut trainer,
        coach.as_mut(),
        &mut store,
        &cfg.sampler,
        &opts,
        &root.substream(stream::SAMPLER),
    )?;
    write(&dir.join("metrics.csv"), &metrics_csv(&artifacts.metrics))?;
    if let Some(c) = &coach {
        let mut log = String::from(COACH_LOG_HEADER);
        log.push('\n');
        for r in &artifacts.coach_log {
            let _ = writeln!(
                log,
                "{},{},{},{},{},{},{},{}",
                r.step,
                r.accepted,
                r.store_size,
                r.subsample_size,
                r.subsample_failures,
                r.heldout_auc.map_or(String::new(), |a| format!("{a:?}")),
                r.final_loss.map_or(String::new(), |a| format!("{a:?}")),
                r.status.replace(',', ";")
            );
        }
        write(&dir.join("coach.csv"), &log)?;
        c.save(&dir.join("coach.ckpt"))?;
    }
    let mut eval_csv = String::from(EVAL_HEADER);
    eval_csv.push('\n');
    for (step, blob) in &artifacts.checkpoints {
        blob.save(&ckpt_dir.join(checkpoint_name(*step)))?;
        let (policy, _) = PolicyModel::from_snapshot(blob)?;
        let row = evaluate(&policy, &spec, cfg.eval_episodes, cfg.eval_seed, cfg.eval_deterministic, *step)?;
        eval_csv.push_str(&row.to_csv());
        eval_csv.push('\n');
    }
    write(&dir.join("eval.csv"), &eval_csv)?;
    Ok(dir)
}

/// Evaluates one checkpoint file on the paired set.
pub fn evaluate_checkpoint(cfg: &ExperimentConfig, path: &Path) -> Result<EvalRow> {
    let blob = CheckpointBlob::load(path)?;
    let (policy, _) = PolicyModel::from_snapshot(&blob)?;
    let step = path
        .file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.strip_prefix("step-"))
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    evaluate(&policy, &cfg.spec(), cfg.eval_episodes, cfg.eval_seed, cfg.eval_deterministic, step)
}
