//! Episode-driven PPO training loop.
//!
//! Episodes are stepped one transition at a time so a caller can look at a
//! prefix before deciding whether the episode joins the training batch.
//! Until [`Trainer::commit`] is called an episode's transitions are held
//! back; [`Trainer::discard`] drops them. Every environment step counts
//! toward the agent's age and the batch trigger, whether or not its
//! transition is ever trained on.

use super::gae::{compute_gae, GaeStep};
use super::policy::PolicyModel;
use super::update::{ppo_update, Batch, UpdateStats};
use super::{AgentContext, PpoConfig};
use crate::env::{self, EnvSpec, EnvState};
use crate::error::{Error, Result};
use crate::numcore::{Adam, Matrix, Rng};

/// One recorded transition with the acting policy's outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub observation: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
    pub failed: bool,
}

#[derive(Clone, Debug)]
struct Segment {
    steps: Vec<StepRecord>,
    bootstrap: f64,
}

/// Observation and agent context before a step, plus the action taken.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryStep {
    pub observation: Vec<f64>,
    pub phi: f64,
    pub action: Vec<f64>,
}

/// A live episode.
#[derive(Clone, Debug)]
pub struct Episode {
    pub start: EnvState,
    pub state: EnvState,
    pub committed: bool,
    pub total_reward: f64,
    /// Per-step record of what the predictor sees, capped at `history_cap`.
    pub history: Vec<HistoryStep>,
    history_cap: usize,
    records: Vec<StepRecord>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.state.step_index
    }

    pub fn is_empty(&self) -> bool {
        self.state.step_index == 0
    }

    pub fn done(&self) -> bool {
        self.state.done
    }

    pub fn failed(&self) -> bool {
        self.state.failed
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeSummary {
    pub reward: f64,
    pub length: usize,
    pub failed: bool,
    pub age_at_end: u64,
}

/// A finished episode with its start state and capped history.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub summary: EpisodeSummary,
    pub start: EnvState,
    pub history: Vec<HistoryStep>,
}

pub struct Trainer {
    pub spec: EnvSpec,
    pub cfg: PpoConfig,
    pub policy: PolicyModel,
    pub ctx: AgentContext,
    optimizer: Adam,
    rng: Rng,
    update_rng: Rng,
    segments: Vec<Segment>,
    steps_since_update: usize,
    /// Normalizer for the age fed to the failure predictor.
    phi_scale: f64,
    pub episodes: Vec<EpisodeSummary>,
    pub updates: Vec<UpdateStats>,
}

impl Trainer {
    /// Fresh policy for `spec`. `rng` seeds both the initialization and the
    /// trainer's own substreams.
    pub fn new(spec: EnvSpec, cfg: PpoConfig, rng: &Rng, phi_scale: f64) -> Result<Self> {
        let mut init = rng.substream(0);
        let policy = PolicyModel::new(spec.obs_dim, spec.action_dim, &cfg.hidden, cfg.init_log_std, &mut init)?;
        Self::with_policy(spec, cfg, policy, AgentContext::default(), rng, phi_scale)
    }

    pub fn with_policy(
        spec: EnvSpec,
        cfg: PpoConfig,
        policy: PolicyModel,
        ctx: AgentContext,
        rng: &Rng,
        phi_scale: f64,
    ) -> Result<Self> {
        if policy.obs_dim() != spec.obs_dim || policy.action_dim() != spec.action_dim {
            return Err(Error::shape(
                "trainer",
                format!(
                    "policy is {}→{}, environment `{}` is {}→{}",
                    policy.obs_dim(),
                    policy.action_dim(),
                    spec.name(),
                    spec.obs_dim,
                    spec.action_dim
                ),
            ));
        }
        if phi_scale <= 0.0 {
            return Err(Error::InvalidArgument("phi_scale must be positive".into()));
        }
        Ok(Self {
            optimizer: Adam::with_lr(cfg.lr),
            spec,
            cfg,
            policy,
            ctx,
            rng: rng.substream(1),
            update_rng: rng.substream(2),
            segments: Vec::new(),
            steps_since_update: 0,
            phi_scale,
            episodes: Vec::new(),
            updates: Vec::new(),
        })
    }

    /// Agent context encoding fed to the failure predictor.
    pub fn phi(&self) -> f64 {
        self.ctx.age_timesteps as f64 / self.phi_scale
    }

    pub fn phi_scale(&self) -> f64 {
        self.phi_scale
    }

    pub fn age(&self) -> u64 {
        self.ctx.age_timesteps
    }

    pub fn start_episode(&mut self, history_cap: usize) -> Episode {
        let start = env::reset(&self.spec, &mut self.rng);
        self.start_episode_from(start, history_cap)
    }

    pub fn start_episode_from(&mut self, start: EnvState, history_cap: usize) -> Episode {
        Episode {
            state: start.clone(),
            start,
            committed: false,
            total_reward: 0.0,
            history: Vec::new(),
            history_cap,
            records: Vec::new(),
        }
    }

    /// Takes one step with the current stochastic policy.
    pub fn advance(&mut self, ep: &mut Episode) -> Result<()> {
        let obs = ep.state.observation.clone();
        let phi = self.phi();
        let sample = self.policy.act(&obs, &mut self.rng)?;
        if ep.history.len() < ep.history_cap {
            ep.history.push(HistoryStep {
                observation: obs.clone(),
                phi,
                action: sample.action.clone(),
            });
        }
        let r = env::step(&self.spec, &mut ep.state, &sample.action)?;
        self.ctx.age_timesteps += 1;
        self.steps_since_update += 1;
        ep.total_reward += r.reward;
        ep.records.push(StepRecord {
            observation: obs,
            action: sample.action,
            log_prob: sample.log_prob,
            value: sample.value,
            reward: r.reward,
            done: r.done,
            failed: r.failed,
        });
        Ok(())
    }

    /// Admits the episode's transitions (past and future) to training.
    pub fn commit(&mut self, ep: &mut Episode) {
        ep.committed = true;
    }

    /// Drops an episode without logging it. Its steps still count toward age;
    /// transitions not yet handed to an update never reach a batch.
    pub fn discard(&mut self, ep: Episode) {
        drop(ep);
    }

    fn close_segment(&mut self, ep: &mut Episode) -> Result<()> {
        if !ep.committed || ep.records.is_empty() {
            return Ok(());
        }
        let bootstrap = if ep.state.done {
            0.0
        } else {
            self.policy.value(&ep.state.observation)?
        };
        self.segments.push(Segment {
            steps: std::mem::take(&mut ep.records),
            bootstrap,
        });
        Ok(())
    }

    /// Closes the episode (finished or truncated) and logs it if committed.
    pub fn end_episode(&mut self, mut ep: Episode) -> Result<Option<EpisodeSummary>> {
        if !ep.committed {
            return Ok(None);
        }
        self.close_segment(&mut ep)?;
        let summary = EpisodeSummary {
            reward: ep.total_reward,
            length: ep.state.step_index,
            failed: ep.state.failed,
            age_at_end: self.ctx.age_timesteps,
        };
        self.episodes.push(summary.clone());
        Ok(Some(summary))
    }

    pub fn steps_since_update(&self) -> usize {
        self.steps_since_update
    }

    pub fn update_due(&self) -> bool {
        self.steps_since_update >= self.cfg.batch_steps
    }

    /// Runs a PPO update if the batch trigger fired. A committed open episode
    /// contributes its steps so far, bootstrapped from its current state.
    pub fn maybe_update(&mut self, open: Option<&mut Episode>) -> Result<Option<UpdateStats>> {
        if !self.update_due() {
            return Ok(None);
        }
        if let Some(ep) = open {
            self.close_segment(ep)?;
        }
        self.steps_since_update = 0;
        let segments = std::mem::take(&mut self.segments);
        let Some(batch) = self.build_batch(&segments)? else {
            return Ok(None);
        };
        let stats = ppo_update(&mut self.policy, &mut self.optimizer, &batch, &self.cfg, &mut self.update_rng)?;
        self.updates.push(stats.clone());
        Ok(Some(stats))
    }

    fn build_batch(&self, segments: &[Segment]) -> Result<Option<Batch>> {
        let n: usize = segments.iter().map(|s| s.steps.len()).sum();
        if n == 0 {
            return Ok(None);
        }
        let mut obs = Vec::with_capacity(n);
        let mut actions = Vec::with_capacity(n);
        let mut batch = Batch {
            observations: Matrix::zeros(0, 0),
            actions: Matrix::zeros(0, 0),
            log_probs_old: Vec::with_capacity(n),
            advantages: Vec::with_capacity(n),
            returns: Vec::with_capacity(n),
            values_old: Vec::with_capacity(n),
        };
        for seg in segments {
            let gae_steps: Vec<GaeStep> = seg
                .steps
                .iter()
                .map(|s| GaeStep {
                    reward: s.reward * self.cfg.reward_scale,
                    value: s.value,
                    done: s.done,
                })
                .collect();
            let (adv, ret) = compute_gae(&gae_steps, seg.bootstrap, self.cfg.gamma, self.cfg.lam)?;
            for s in &seg.steps {
                obs.push(s.observation.clone());
                actions.push(s.action.clone());
                batch.log_probs_old.push(s.log_prob);
                batch.values_old.push(s.value);
            }
            batch.advantages.extend(adv);
            batch.returns.extend(ret);
        }
        batch.observations = Matrix::from_rows(&obs)?;
        batch.actions = Matrix::from_rows(&actions)?;
        Ok(Some(batch))
    }

    /// Plays one ordinary (always committed) episode, updating as batches
    /// fill.
    pub fn run_episode(&mut self, history_cap: usize) -> Result<EpisodeOutcome> {
        let mut ep = self.start_episode(history_cap);
        self.commit(&mut ep);
        while !ep.done() {
            self.advance(&mut ep)?;
            self.maybe_update(Some(&mut ep))?;
        }
        let start = ep.start.clone();
        let history = std::mem::take(&mut ep.history);
        let summary = self.end_episode(ep)?.expect("committed episode");
        Ok(EpisodeOutcome { summary, start, history })
    }

    /// Mean reward of the last `window` logged episodes.
    pub fn recent_mean_reward(&self, window: usize) -> Option<f64> {
        if self.episodes.is_empty() {
            return None;
        }
        let start = self.episodes.len().saturating_sub(window);
        let recent = &self.episodes[start..];
        Some(recent.iter().map(|e| e.reward).sum::<f64>() / recent.len() as f64)
    }
}
