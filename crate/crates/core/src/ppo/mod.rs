//! Proximal policy optimization: Gaussian actor-critic, advantage
//! estimation, clipped-surrogate updates and the episode-driven trainer.

mod gae;
mod policy;
mod trainer;
mod update;

pub use gae::{compute_gae, gae_for_trajectory, GaeStep};
pub use policy::{gaussian_log_prob, ActionSample, PolicyModel, PolicyNodes, LOG_STD_MAX, LOG_STD_MIN};
pub use trainer::{Episode, EpisodeOutcome, HistoryStep, EpisodeSummary, StepRecord, Trainer};
pub use update::{ppo_loss, ppo_update, Batch, PpoLoss, UpdateStats};

use crate::checkpoint::CheckpointBlob;

/// PPO hyperparameters. Identical for vanilla and adversarial runs.
#[derive(Clone, Debug, PartialEq)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lam: f64,
    pub clip_eps: f64,
    pub lr: f64,
    pub batch_steps: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Global gradient-norm clip; `0` disables.
    pub max_grad_norm: f64,
    /// Multiplier applied to rewards before advantage estimation. Keeps
    /// value targets O(1) so the shared trunk is not dominated by the critic.
    pub reward_scale: f64,
    pub init_log_std: f64,
    pub hidden: Vec<usize>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lam: 0.95,
            clip_eps: 0.2,
            lr: 3e-4,
            batch_steps: 2048,
            epochs: 10,
            minibatch: 64,
            entropy_coef: 0.0,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            reward_scale: 0.05,
            init_log_std: 0.5,
            hidden: vec![64, 64],
        }
    }
}

/// Agent-dependent conditioning information.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AgentContext {
    /// Environment steps consumed by training so far.
    pub age_timesteps: u64,
    pub snapshot_id: u64,
}

/// Serializes policy parameters together with the agent context.
pub fn snapshot(policy: &PolicyModel, ctx: &AgentContext) -> CheckpointBlob {
    policy.snapshot(ctx)
}
