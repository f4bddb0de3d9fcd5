//! Paired evaluation of policy checkpoints.
//!
//! Episode `i` always starts from the state drawn by substream `i` of the
//! evaluation seed and, when sampling, consumes action noise from that same
//! substream. Two checkpoints evaluated with the same seed therefore face
//! identical initial states and identical noise draws.

use crate::env::{self, EnvSpec, EnvState};
use crate::error::{Error, Result};
use crate::numcore::Rng;
use crate::ppo::PolicyModel;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub step: u64,
    pub mean_reward: f64,
    /// Standard error of the mean reward across episodes.
    pub reward_se: f64,
    pub failures: usize,
    pub episodes: usize,
    pub mean_length: f64,
    pub min_length: usize,
    pub max_length: usize,
}

pub const EVAL_HEADER: &str = "step,mean_reward,reward_se,failures,episodes,mean_length,min_length,max_length";

impl EvalRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{:?},{:?},{},{},{:?},{},{}",
            self.step,
            self.mean_reward,
            self.reward_se,
            self.failures,
            self.episodes,
            self.mean_length,
            self.min_length,
            self.max_length
        )
    }

    pub fn from_csv(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return None;
        }
        Some(Self {
            step: f[0].parse().ok()?,
            mean_reward: f[1].parse().ok()?,
            reward_se: f[2].parse().ok()?,
            failures: f[3].parse().ok()?,
            episodes: f[4].parse().ok()?,
            mean_length: f[5].parse().ok()?,
            min_length: f[6].parse().ok()?,
            max_length: f[7].parse().ok()?,
        })
    }
}

/// Initial states of the paired evaluation set.
pub fn eval_initial_states(spec: &EnvSpec, eval_seed: u64, episodes: usize) -> Vec<EnvState> {
    let base = Rng::new(eval_seed);
    (0..episodes)
        .map(|i| env::reset(spec, &mut base.substream(i as u64)))
        .collect()
}

/// Plays `episodes` full episodes of `policy` on the paired set.
pub fn evaluate(
    policy: &PolicyModel,
    spec: &EnvSpec,
    episodes: usize,
    eval_seed: u64,
    deterministic: bool,
    step: u64,
) -> Result<EvalRow> {
    if policy.obs_dim() != spec.obs_dim || policy.action_dim() != spec.action_dim {
        return Err(Error::shape(
            "evaluate",
            format!(
                "checkpoint is {}→{}, environment `{}` is {}→{}",
                policy.obs_dim(),
                policy.action_dim(),
                spec.name(),
                spec.obs_dim,
                spec.action_dim
            ),
        ));
    }
    if episodes == 0 {
        return Err(Error::InvalidArgument("need at least one evaluation episode".into()));
    }
    let base = Rng::new(eval_seed);
    let mut rewards = Vec::with_capacity(episodes);
    let mut lengths = Vec::with_capacity(episodes);
    let mut failures = 0;
    for i in 0..episodes {
        let mut rng = base.substream(i as u64);
        let start = env::reset(spec, &mut rng);
        let mut err = None;
        let traj = env::rollout_from(
            spec,
            start,
            |o| {
                let a = if deterministic {
                    policy.mean_action(o)
                } else {
                    policy.act(o, &mut rng).map(|s| s.action)
                };
                a.unwrap_or_else(|e| {
                    err.get_or_insert(e);
                    vec![0.0; spec.action_dim]
                })
            },
            spec.t_max,
        )?;
        if let Some(e) = err {
            return Err(e);
        }
        rewards.push(traj.total_reward());
        lengths.push(traj.len());
        if traj.failed() {
            failures += 1;
        }
    }
    let n = episodes as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let se = if episodes > 1 {
        let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(EvalRow {
        step,
        mean_reward: mean,
        reward_se: se,
        failures,
        episodes,
        mean_length: lengths.iter().sum::<usize>() as f64 / n,
        min_length: *lengths.iter().min().expect("nonempty"),
        max_length: *lengths.iter().max().expect("nonempty"),
    })
}
