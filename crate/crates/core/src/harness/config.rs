//! Flat `key=value` experiment configuration.
//!
//! ```text
//! # comment
//! env.name=tiltpole
//! sampler.alpha=1.0
//! ```
//!
//! Keys carry a section prefix (`env.`, `run.`, `stage1.`, `coach.`,
//! `sampler.`, `ppo.`, `stage2.`, `eval.`). Unknown keys are errors. Defaults
//! depend on the environment, so `env.name` is applied before anything else.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::coachnet::{CoachConfig, Variant};
use crate::env::{EnvKind, EnvSpec};
use crate::error::{Error, Result};
use crate::ppo::PpoConfig;
use crate::sampler::SamplerPolicy;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub seeds: Vec<u64>,
    /// Age divisor for the predictor's φ input.
    pub phi_scale: f64,

    pub r_threshold: f64,
    pub stage1_max_steps: u64,
    pub n_sequences: usize,
    pub subsample_target: usize,
    pub ratio_lo: f64,
    pub ratio_hi: f64,
    /// Recency half-life in steps; `None` means half the harvest window.
    pub half_life: Option<f64>,
    /// Also train the feed-forward variant on the same data in stage 1.
    pub ablation: bool,

    /// Predictor architecture; `coach.horizon` and `coach.l` double as the
    /// harvest horizon and the sampler prefix.
    pub coach: CoachConfig,
    pub coach_epochs: usize,
    pub finetune_epochs: usize,

    pub sampler: SamplerPolicy,
    pub ppo: PpoConfig,

    pub stage2_steps: u64,
    pub checkpoint_interval: u64,
    pub report_interval: u64,

    pub eval_episodes: usize,
    pub eval_seed: u64,
    /// Evaluate with the mean action instead of sampling.
    pub eval_deterministic: bool,
}

impl ExperimentConfig {
    pub fn for_env(env: EnvKind) -> Self {
        let spec = EnvSpec::by_kind(env);
        let (horizon, threshold) = match env {
            EnvKind::TiltPole => (64, 250.0),
            EnvKind::SlipperySlope => (48, 60.0),
        };
        Self {
            env,
            seeds: vec![0, 1, 2, 3, 4],
            phi_scale: 1_000_000.0,
            r_threshold: threshold,
            stage1_max_steps: 300_000,
            n_sequences: 500,
            subsample_target: 1000,
            ratio_lo: 0.3,
            ratio_hi: 0.7,
            half_life: None,
            ablation: true,
            coach: CoachConfig::wsp(horizon),
            coach_epochs: 30,
            finetune_epochs: 5,
            sampler: SamplerPolicy {
                alpha: 1.0,
                mu0: 0.1,
                schedule_steps: 200_000,
                l: 5,
                m_period: 50,
                t_budget: spec.t_max,
            },
            ppo: PpoConfig::default(),
            stage2_steps: 200_000,
            checkpoint_interval: 20_000,
            report_interval: 10_000,
            eval_episodes: 50,
            eval_seed: 1_000_003,
            eval_deterministic: false,
        }
    }

    pub fn spec(&self) -> EnvSpec {
        EnvSpec::by_kind(self.env)
    }

    /// Parses config text on top of the defaults for its `env.name`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                what: "config".into(),
                line: i + 1,
                detail: format!("expected key=value, got `{line}`"),
            })?;
            pairs.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let env = match pairs.iter().rev().find(|(_, k, _)| k == "env.name") {
            Some((_, _, v)) => v.parse()?,
            None => EnvKind::TiltPole,
        };
        let mut cfg = Self::for_env(env);
        for (line, k, v) in &pairs {
            cfg.set(k, v).map_err(|e| match e {
                Error::Config(detail) => Error::Parse {
                    what: "config".into(),
                    line: *line,
                    detail,
                },
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`")))
        }
        fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
            v.split(',').map(|x| num(key, x.trim())).collect()
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(Error::Config(format!("`{key}` takes true or false, got `{v}`"))),
            }
        }
        match key {
            "env.name" => self.env = value.parse()?,
            "run.seeds" => self.seeds = list(key, value)?,
            "run.phi_scale" => self.phi_scale = num(key, value)?,

            "stage1.r_threshold" => self.r_threshold = num(key, value)?,
            "stage1.max_steps" => self.stage1_max_steps = num(key, value)?,
            "stage1.n_sequences" => self.n_sequences = num(key, value)?,
            "stage1.horizon" => self.coach.horizon = num(key, value)?,
            "stage1.l" => {
                self.coach.l = num(key, value)?;
                self.sampler.l = self.coach.l;
            }
            "stage1.subsample_target" => self.subsample_target = num(key, value)?,
            "stage1.ratio_lo" => self.ratio_lo = num(key, value)?,
            "stage1.ratio_hi" => self.ratio_hi = num(key, value)?,
            "stage1.half_life" => {
                self.half_life = match value {
                    "auto" => None,
                    v => Some(num(key, v)?),
                }
            }
            "stage1.ablation" => self.ablation = flag(key, value)?,

            "coach.variant" => {
                let variant: Variant = value.parse()?;
                if variant != self.coach.variant {
                    let base = match variant {
                        Variant::Wsp => CoachConfig::wsp(self.coach.horizon),
                        Variant::Mlp => CoachConfig::mlp(self.coach.horizon),
                    };
                    self.coach.variant = variant;
                    self.coach.head_widths = base.head_widths;
                }
            }
            "coach.rnn_widths" => self.coach.rnn_widths = list(key, value)?,
            "coach.head_widths" => self.coach.head_widths = list(key, value)?,
            "coach.k1" => self.coach.k1 = num(key, value)?,
            "coach.k2" => self.coach.k2 = num(key, value)?,
            "coach.lr" => self.coach.lr = num(key, value)?,
            "coach.minibatch" => self.coach.minibatch = num(key, value)?,
            "coach.holdout_fraction" => self.coach.holdout_fraction = num(key, value)?,
            "coach.max_grad_norm" => self.coach.max_grad_norm = num(key, value)?,
            "coach.epochs" => self.coach_epochs = num(key, value)?,
            "coach.finetune_epochs" => self.finetune_epochs = num(key, value)?,

            "sampler.alpha" => self.sampler.alpha = num(key, value)?,
            "sampler.mu0" => self.sampler.mu0 = num(key, value)?,
            "sampler.schedule_steps" => self.sampler.schedule_steps = num(key, value)?,
            "sampler.m_period" => self.sampler.m_period = num(key, value)?,
            "sampler.t_budget" => self.sampler.t_budget = num(key, value)?,

            "ppo.gamma" => self.ppo.gamma = num(key, value)?,
            "ppo.lam" => self.ppo.lam = num(key, value)?,
            "ppo.clip_eps" => self.ppo.clip_eps = num(key, value)?,
            "ppo.lr" => self.ppo.lr = num(key, value)?,
            "ppo.batch_steps" => self.ppo.batch_steps = num(key, value)?,
            "ppo.epochs" => self.ppo.epochs = num(key, value)?,
            "ppo.minibatch" => self.ppo.minibatch = num(key, value)?,
            "ppo.entropy_coef" => self.ppo.entropy_coef = num(key, value)?,
            "ppo.value_coef" => self.ppo.value_coef = num(key, value)?,
            "ppo.max_grad_norm" => self.ppo.max_grad_norm = num(key, value)?,
            "ppo.reward_scale" => self.ppo.reward_scale = num(key, value)?,
            "ppo.init_log_std" => self.ppo.init_log_std = num(key, value)?,
            "ppo.hidden" => self.ppo.hidden = list(key, value)?,

            "stage2.total_steps" => self.stage2_steps = num(key, value)?,
            "stage2.checkpoint_interval" => self.checkpoint_interval = num(key, value)?,
            "stage2.report_interval" => self.report_interval = num(key, value)?,

            "eval.episodes" => self.eval_episodes = num(key, value)?,
            "eval.seed" => self.eval_seed = num(key, value)?,
            "eval.deterministic" => self.eval_deterministic = flag(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.spec();
        let err = |m: String| Err(Error::Config(m));
        self.coach.validate()?;
        self.sampler.validate()?;
        if self.coach.l != self.sampler.l {
            return err("predictor and sampler prefix lengths differ".into());
        }
        if self.coach.horizon > spec.t_max {
            return err(format!("horizon {} exceeds the episode cap {}", self.coach.horizon, spec.t_max));
        }
        if self.sampler.t_budget > spec.t_max {
            return err(format!("t_budget {} exceeds the episode cap {}", self.sampler.t_budget, spec.t_max));
        }
        if self.seeds.is_empty() {
            return err("run.seeds is empty".into());
        }
        let counts = [
            ("stage1.max_steps", self.stage1_max_steps),
            ("stage1.n_sequences", self.n_sequences as u64),
            ("stage1.subsample_target", self.subsample_target as u64),
            ("stage2.total_steps", self.stage2_steps),
            ("stage2.checkpoint_interval", self.checkpoint_interval),
            ("stage2.report_interval", self.report_interval),
            ("eval.episodes", self.eval_episodes as u64),
            ("ppo.batch_steps", self.ppo.batch_steps as u64),
            ("ppo.minibatch", self.ppo.minibatch as u64),
            ("coach.minibatch", self.coach.minibatch as u64),
        ];
        for (k, v) in counts {
            if v == 0 {
                return err(format!("`{k}` must be positive"));
            }
        }
        if !(0.0 < self.ratio_lo && self.ratio_lo < self.ratio_hi && self.ratio_hi < 1.0) {
            return err("need 0 < ratio_lo < ratio_hi < 1".into());
        }
        if self.half_life.is_some_and(|h| !(h > 0.0)) {
            return err("stage1.half_life must be positive".into());
        }
        if !(self.phi_scale > 0.0) {
            return err("run.phi_scale must be positive".into());
        }
        if self.ppo.hidden.is_empty() {
            return err("ppo.hidden needs at least one layer".into());
        }
        Ok(())
    }

    /// Canonical `key=value` listing of every setting.
    pub fn to_text(&self) -> String {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let seeds = self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
        let f = |x: f64| format!("{x:?}");
        let entries: Vec<(&str, String)> = vec![
            ("env.name", self.env.to_string()),
            ("run.seeds", seeds),
            ("run.phi_scale", f(self.phi_scale)),
            ("stage1.r_threshold", f(self.r_threshold)),
            ("stage1.max_steps", self.stage1_max_steps.to_string()),
            ("stage1.n_sequences", self.n_sequences.to_string()),
            ("stage1.horizon", self.coach.horizon.to_string()),
            ("stage1.l", self.coach.l.to_string()),
            ("stage1.subsample_target", self.subsample_target.to_string()),
            ("stage1.ratio_lo", f(self.ratio_lo)),
            ("stage1.ratio_hi", f(self.ratio_hi)),
            ("stage1.half_life", self.half_life.map_or("auto".into(), f)),
            ("stage1.ablation", self.ablation.to_string()),
            ("coach.variant", self.coach.variant.to_string()),
            ("coach.rnn_widths", join(&self.coach.rnn_widths)),
            ("coach.head_widths", join(&self.coach.head_widths)),
            ("coach.k1", f(self.coach.k1)),
            ("coach.k2", f(self.coach.k2)),
            ("coach.lr", f(self.coach.lr)),
            ("coach.minibatch", self.coach.minibatch.to_string()),
            ("coach.holdout_fraction", f(self.coach.holdout_fraction)),
            ("coach.max_grad_norm", f(self.coach.max_grad_norm)),
            ("coach.epochs", self.coach_epochs.to_string()),
            ("coach.finetune_epochs", self.finetune_epochs.to_string()),
            ("sampler.alpha", f(self.sampler.alpha)),
            ("sampler.mu0", f(self.sampler.mu0)),
            ("sampler.schedule_steps", self.sampler.schedule_steps.to_string()),
            ("sampler.m_period", self.sampler.m_period.to_string()),
            ("sampler.t_budget", self.sampler.t_budget.to_string()),
            ("ppo.gamma", f(self.ppo.gamma)),
            ("ppo.lam", f(self.ppo.lam)),
            ("ppo.clip_eps", f(self.ppo.clip_eps)),
            ("ppo.lr", f(self.ppo.lr)),
            ("ppo.batch_steps", self.ppo.batch_steps.to_string()),
            ("ppo.epochs", self.ppo.epochs.to_string()),
            ("ppo.minibatch", self.ppo.minibatch.to_string()),
            ("ppo.entropy_coef", f(self.ppo.entropy_coef)),
            ("ppo.value_coef", f(self.ppo.value_coef)),
            ("ppo.max_grad_norm", f(self.ppo.max_grad_norm)),
            ("ppo.reward_scale", f(self.ppo.reward_scale)),
            ("ppo.init_log_std", f(self.ppo.init_log_std)),
            ("ppo.hidden", join(&self.ppo.hidden)),
            ("stage2.total_steps", self.stage2_steps.to_string()),
            ("stage2.checkpoint_interval", self.checkpoint_interval.to_string()),
            ("stage2.report_interval", self.report_interval.to_string()),
            ("eval.episodes", self.eval_episodes.to_string()),
            ("eval.seed", self.eval_seed.to_string()),
            ("eval.deterministic", self.eval_deterministic.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in entries {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// Hex SHA-256 of [`Self::to_text`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_text_round_trips() {
        let mut cfg = ExperimentConfig::for_env(EnvKind::SlipperySlope);
        cfg.sampler.alpha = 2.5;
        cfg.half_life = Some(1234.5);
        let back = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn unknown_key_is_reported_with_line() {
        let err = ExperimentConfig::parse("env.name=tiltpole\n\nsampler.alhpa=1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn env_defaults_apply_before_overrides() {
        let cfg = ExperimentConfig::parse("stage1.horizon=40\nenv.name=slipperyslope\n").unwrap();
        assert_eq!(cfg.env, EnvKind::SlipperySlope);
        assert_eq!(cfg.coach.horizon, 40);
        assert_eq!(cfg.sampler.t_budget, 300);
    }

    #[test]
    fn inconsistent_horizon_is_rejected() {
        assert!(ExperimentConfig::parse("env.name=slipperyslope\nstage1.horizon=500\n").is_err());
        assert!(ExperimentConfig::parse("stage1.l=64\n").is_err());
    }
}
