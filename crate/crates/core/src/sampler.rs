//! Adversarial episode sampling.
//!
//! Each proposed episode is played for `l` steps; the predictor's failure
//! probability `f` for that prefix sets the acceptance probability
//! `p = min(f^α + μ, 1)`. Rejected prefixes are thrown away (their steps still
//! age the agent); accepted episodes continue and join the PPO batch. `μ`
//! rises linearly to 1, at which point sampling is ordinary Monte Carlo.

use crate::checkpoint::CheckpointBlob;
use crate::coachnet::CoachModel;
use crate::collector::{balanced_subsample, LabeledSequence, SequenceStore, SubsampleSpec};
use crate::error::{Error, Result};
use crate::numcore::Rng;
use crate::ppo::{Episode, EpisodeSummary, Trainer};

/// `min(f^α + μ, 1)`, with `0^0 = 1`.
pub fn acceptance_probability(f: f64, alpha: f64, mu: f64) -> f64 {
    (f.powf(alpha) + mu).min(1.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerPolicy {
    pub alpha: f64,
    pub mu0: f64,
    /// Steps over which `μ` climbs from `mu0` to 1.
    pub schedule_steps: u64,
    /// Prefix length observed before deciding.
    pub l: usize,
    /// Predictor fine-tune period, in accepted episodes.
    pub m_period: usize,
    /// Step budget of one episode, prefix included.
    pub t_budget: usize,
}

impl SamplerPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(Error::Config(format!("sampler alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.mu0 > 0.0 && self.mu0 <= 1.0) {
            return Err(Error::Config(format!("sampler mu0 must lie in (0, 1], got {}", self.mu0)));
        }
        if self.schedule_steps == 0 {
            return Err(Error::Config("sampler schedule_steps must be positive".into()));
        }
        if self.l == 0 || self.t_budget <= self.l {
            return Err(Error::Config(format!("need 0 < l < T, got l={} T={}", self.l, self.t_budget)));
        }
        if self.m_period == 0 {
            return Err(Error::Config("fine-tune period must be positive".into()));
        }
        Ok(())
    }

    /// `min(1, μ0 + (1 − μ0)·step/schedule_steps)`.
    pub fn mu(&self, step: u64) -> f64 {
        let frac = step as f64 / self.schedule_steps as f64;
        (self.mu0 + (1.0 - self.mu0) * frac).min(1.0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SamplingStats {
    pub proposed: u64,
    pub accepted: u64,
    pub rejected: u64,
    /// Steps spent in the first `l` steps of proposals.
    pub prefix_steps: u64,
    /// Steps spent after acceptance.
    pub full_steps: u64,
    /// `rejected · (T − l)`.
    pub saved_steps_estimate: u64,
}

/// Anything that maps an `l`-step `(observation, φ)` prefix to a failure
/// probability.
pub trait FailureOracle {
    fn failure_probability(&self, prefix: &[(Vec<f64>, f64)]) -> Result<f64>;
}

impl FailureOracle for CoachModel {
    fn failure_probability(&self, prefix: &[(Vec<f64>, f64)]) -> Result<f64> {
        Ok(self.predict(prefix)?.probability)
    }
}

/// Adapts a closure into a [`FailureOracle`].
pub struct FnOracle<F>(pub F);

impl<F: Fn(&[(Vec<f64>, f64)]) -> f64> FailureOracle for FnOracle<F> {
    fn failure_probability(&self, prefix: &[(Vec<f64>, f64)]) -> Result<f64> {
        Ok((self.0)(prefix))
    }
}

/// Proposes episodes until one is accepted or `step_budget` environment
/// steps have been used. The accepted episode comes back committed, still
/// live (unless it ended inside the prefix), with its prefix in the batch.
///
/// `mu_at` maps the trainer's current age to `μ`; `on_step` runs after every
/// environment step.
#[allow(clippy::too_many_arguments)]
pub fn propose_and_filter(
    trainer: &mut Trainer,
    oracle: &dyn FailureOracle,
    sp: &SamplerPolicy,
    mu_at: &dyn Fn(u64) -> f64,
    accept_rng: &mut Rng,
    history_cap: usize,
    step_budget: u64,
    stats: &mut SamplingStats,
    on_step: &mut dyn FnMut(&Trainer, &SamplingStats) -> Result<()>,
) -> Result<Option<Episode>> {
    let start = trainer.age();
    loop {
        let mut ep = trainer.start_episode(history_cap.max(sp.l));
        while ep.len() < sp.l && !ep.done() {
            if trainer.age() - start >= step_budget {
                trainer.discard(ep);
                return Ok(None);
            }
            trainer.advance(&mut ep)?;
            stats.prefix_steps += 1;
            on_step(trainer, stats)?;
        }
        stats.proposed += 1;
        let p = if ep.done() {
            1.0
        } else {
            let mu = mu_at(trainer.age());
            if mu >= 1.0 {
                1.0
            } else {
                let prefix: Vec<(Vec<f64>, f64)> = ep.history[..sp.l]
                    .iter()
                    .map(|h| (h.observation.clone(), h.phi))
                    .collect();
                let f = oracle.failure_probability(&prefix)?;
                acceptance_probability(f.clamp(0.0, 1.0), sp.alpha, mu)
            }
        };
        if p >= 1.0 || accept_rng.unit() < p {
            stats.accepted += 1;
            trainer.commit(&mut ep);
            return Ok(Some(ep));
        }
        stats.rejected += 1;
        stats.saved_steps_estimate += (sp.t_budget - sp.l) as u64;
        trainer.discard(ep);
    }
}

/// Everything a stage-2 run needs besides the trainer and the predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub total_steps: u64,
    pub checkpoint_interval: u64,
    pub report_interval: u64,
    /// Horizon of the sequences recorded for fine-tuning.
    pub horizon: usize,
    pub subsample_target: usize,
    pub ratio_lo: f64,
    pub ratio_hi: f64,
    pub half_life: f64,
    pub finetune_epochs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    /// Stage-2 step count.
    pub step: u64,
    /// Accepted episodes completed so far.
    pub episodes: u64,
    /// Mean reward of episodes completed since the previous row.
    pub mean_reward: Option<f64>,
    /// Failed episodes completed since the previous row.
    pub failures: u64,
    pub stats: SamplingStats,
    pub mu: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoachLogRow {
    pub step: u64,
    pub accepted: u64,
    pub store_size: usize,
    pub subsample_size: usize,
    pub subsample_failures: usize,
    /// `None` when the fine-tune failed and the previous model was kept.
    pub heldout_auc: Option<f64>,
    pub final_loss: Option<f64>,
    pub status: String,
}

#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub stats: SamplingStats,
    pub metrics: Vec<MetricsRow>,
    pub coach_log: Vec<CoachLogRow>,
    /// Policy snapshots keyed by stage-2 step.
    pub checkpoints: Vec<(u64, CheckpointBlob)>,
    pub episodes: Vec<EpisodeSummary>,
}

struct Recorder<'a> {
    start: u64,
    opts: &'a RunOptions,
    sp: &'a SamplerPolicy,
    vanilla: bool,
    metrics: Vec<MetricsRow>,
    checkpoints: Vec<(u64, CheckpointBlob)>,
    episodes: u64,
    window_rewards: Vec<f64>,
    window_failures: u64,
    snapshot_id: u64,
}

impl Recorder<'_> {
    fn mu(&self, step: u64) -> f64 {
        if self.vanilla {
            1.0
        } else {
            self.sp.mu(step)
        }
    }

    fn on_step(&mut self, trainer: &Trainer, stats: &SamplingStats) {
        let step = trainer.age() - self.start;
        if step % self.opts.report_interval == 0 {
            let mean_reward = if self.window_rewards.is_empty() {
                None
            } else {
                Some(self.window_rewards.iter().sum::<f64>() / self.window_rewards.len() as f64)
            };
            self.metrics.push(MetricsRow {
                step,
                episodes: self.episodes,
                mean_reward,
                failures: self.window_failures,
                stats: *stats,
                mu: self.mu(step),
            });
            self.window_rewards.clear();
            self.window_failures = 0;
        }
        if step % self.opts.checkpoint_interval == 0 {
            self.checkpoint(trainer, step);
        }
    }

    fn checkpoint(&mut self, trainer: &Trainer, step: u64) {
        let mut ctx = trainer.ctx;
        ctx.snapshot_id = self.snapshot_id;
        self.snapshot_id += 1;
        self.checkpoints.push((step, trainer.policy.snapshot(&ctx)));
    }

    fn episode_done(&mut self, s: &EpisodeSummary) {
        self.episodes += 1;
        self.window_rewards.push(s.reward);
        if s.failed {
            self.window_failures += 1;
        }
    }
}

/// Trains for exactly `opts.total_steps` environment steps.
///
/// With `coach = None` every proposal is accepted (vanilla Monte Carlo);
/// otherwise proposals are filtered and the predictor is fine-tuned on
/// `store` (extended with every accepted episode whose label is known) after
/// every `sp.m_period` accepted episodes.
pub fn adversarial_training_run(
    trainer: &mut Trainer,
    mut coach: Option<&mut CoachModel>,
    store: &mut SequenceStore,
    sp: &SamplerPolicy,
    opts: &RunOptions,
    rng: &Rng,
) -> Result<RunArtifacts> {
    sp.validate()?;
    if opts.checkpoint_interval == 0 || opts.report_interval == 0 {
        return Err(Error::Config("checkpoint and report intervals must be positive".into()));
    }
    if let Some(c) = coach.as_deref() {
        if c.config().l != sp.l {
            return Err(Error::Config(format!(
                "predictor prefix l={} differs from sampler l={}",
                c.config().l,
                sp.l
            )));
        }
    }
    let vanilla = coach.is_none();
    let mut accept_rng = rng.substream(1);
    let mut coach_rng = rng.substream(2);
    let start = trainer.age();
    let mut rec = Recorder {
        start,
        opts,
        sp,
        vanilla,
        metrics: Vec::new(),
        checkpoints: Vec::new(),
        episodes: 0,
        window_rewards: Vec::new(),
        window_failures: 0,
        snapshot_id: 0,
    };
    rec.checkpoint(trainer, 0);
    let mut stats = SamplingStats::default();
    let mut coach_log = Vec::new();
    let mut summaries = Vec::new();
    let history_cap = opts.horizon.max(sp.l);
    let mu_at = |age: u64| if vanilla { 1.0 } else { sp.mu(age - start) };

    while trainer.age() - start < opts.total_steps {
        let budget = opts.total_steps - (trainer.age() - start);
        let accepted = {
            let oracle: &dyn FailureOracle = match coach.as_deref() {
                Some(c) => c,
                None => &FnOracle(|_: &[(Vec<f64>, f64)]| 0.0),
            };
            propose_and_filter(
                trainer,
                oracle,
                sp,
                &mu_at,
                &mut accept_rng,
                history_cap,
                budget,
                &mut stats,
                &mut |t, s| {
                    rec.on_step(t, s);
                    Ok(())
                },
            )?
        };
        let Some(mut ep) = accepted else { break };
        trainer.maybe_update(Some(&mut ep))?;
        while !ep.done() && ep.len() < sp.t_budget && trainer.age() - start < opts.total_steps {
            trainer.advance(&mut ep)?;
            stats.full_steps += 1;
            trainer.maybe_update(Some(&mut ep))?;
            rec.on_step(trainer, &stats);
        }
        let failed_at = ep.failed().then_some(ep.len());
        let label_known = failed_at.is_some_and(|k| k <= opts.horizon) || ep.len() >= opts.horizon;
        let history = std::mem::take(&mut ep.history);
        let summary = trainer.end_episode(ep)?.expect("accepted episodes are committed");
        rec.episode_done(&summary);
        summaries.push(summary.clone());

        if let Some(c) = coach.as_deref_mut() {
            if label_known {
                store.push(LabeledSequence::from_history(
                    &history,
                    failed_at,
                    opts.horizon,
                    trainer.spec.obs_dim,
                    summary.age_at_end,
                )?)?;
            }
            if stats.accepted % sp.m_period as u64 == 0 {
                coach_log.push(fine_tune(c, store, opts, trainer.age(), trainer.age() - start, stats.accepted, &mut coach_rng));
            }
        }
    }
    Ok(RunArtifacts {
        stats,
        metrics: rec.metrics,
        coach_log,
        checkpoints: rec.checkpoints,
        episodes: summaries,
    })
}

/// Fine-tunes on a fresh balanced subsample. Failures leave `coach` as it was.
fn fine_tune(
    coach: &mut CoachModel,
    store: &SequenceStore,
    opts: &RunOptions,
    age_now: u64,
    step: u64,
    accepted: u64,
    rng: &mut Rng,
) -> CoachLogRow {
    let mut row = CoachLogRow {
        step,
        accepted,
        store_size: store.len(),
        subsample_size: 0,
        subsample_failures: 0,
        heldout_auc: None,
        final_loss: None,
        status: String::new(),
    };
    let spec = SubsampleSpec {
        target_size: opts.subsample_target,
        ratio_lo: opts.ratio_lo,
        ratio_hi: opts.ratio_hi,
        half_life: opts.half_life,
        age_now,
    };
    let sub = match balanced_subsample(store, &spec, rng) {
        Ok(s) => s,
        Err(e) => {
            row.status = format!("skipped: {e}");
            return row;
        }
    };
    row.subsample_size = sub.len();
    row.subsample_failures = sub.failures();
    match coach.train(&sub, opts.finetune_epochs, rng) {
        Ok(report) => {
            row.heldout_auc = report.heldout.map(|h| h.auc);
            row.final_loss = report.epochs.last().map(|e| e.total);
            row.status = "ok".into();
        }
        Err(e) => row.status = format!("kept previous model: {e}"),
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tagged_examples() {
        assert_eq!(acceptance_probability(0.0, 1.0, 0.1), 0.1);
        assert_eq!(acceptance_probability(0.37, 3.0, 1.0), 1.0);
        assert_eq!(acceptance_probability(0.5, 2.0, 0.1), 0.35);
        assert_eq!(acceptance_probability(0.0, 0.0, 0.1), 1.0);
    }

    #[test]
    fn schedule_reaches_one() {
        let sp = SamplerPolicy {
            alpha: 1.0,
            mu0: 0.1,
            schedule_steps: 100,
            l: 5,
            m_period: 50,
            t_budget: 400,
        };
        assert_eq!(sp.mu(0), 0.1);
        assert_eq!(sp.mu(100), 1.0);
        assert_eq!(sp.mu(1000), 1.0);
        assert!((sp.mu(50) - 0.55).abs() < 1e-15);
    }
}
