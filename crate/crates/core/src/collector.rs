//! Training-data collection for the failure predictor.
//!
//! An agent is first trained to a reward threshold; after that, episodes
//! keep training the agent while their first `H` steps are recorded as
//! [`LabeledSequence`]s, so the collected data spans many agent versions.

use std::fmt::Write as _;
use std::path::Path;

use crate::env::{self, EnvSpec, EnvState};
use crate::error::{Error, Result};
use crate::numcore::Rng;
use crate::ppo::{AgentContext, HistoryStep, Trainer};

pub const SEQ_HEADER: &str = "COACHNET-SEQ v1";

/// First-`H` `(observation, φ)` pairs of one episode, zero padded past
/// `valid_len`, with a binary failure label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSequence {
    /// `H` observations; entries at `valid_len..` are zero vectors.
    pub observations: Vec<Vec<f64>>,
    /// `H` context values; entries at `valid_len..` are zero.
    pub phi: Vec<f64>,
    pub valid_len: usize,
    /// `true` when the episode failed within `H` steps.
    pub failed: bool,
    pub collected_at_age: u64,
    /// Actions taken at the valid steps. Kept for audit replay only; the
    /// predictor never sees them.
    pub actions: Vec<Vec<f64>>,
}

impl LabeledSequence {
    /// Builds a sequence from an episode's recorded steps. `failed_at` is the
    /// 1-based step on which the episode failed, if it did.
    pub fn from_history(
        history: &[HistoryStep],
        failed_at: Option<usize>,
        horizon: usize,
        obs_dim: usize,
        collected_at_age: u64,
    ) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::InvalidArgument(format!("horizon must be at least 2, got {horizon}")));
        }
        let failed = failed_at.is_some_and(|k| k <= horizon);
        let valid_len = match failed_at {
            Some(k) if k <= horizon => k,
            _ => horizon,
        };
        if history.len() < valid_len {
            return Err(Error::InvalidArgument(format!(
                "history has {} steps, label needs {valid_len}",
                history.len()
            )));
        }
        let mut observations = vec![vec![0.0; obs_dim]; horizon];
        let mut phi = vec![0.0; horizon];
        let mut actions = Vec::with_capacity(valid_len);
        for (t, h) in history.iter().take(valid_len).enumerate() {
            if h.observation.len() != obs_dim {
                return Err(Error::shape(
                    "labeled sequence",
                    format!("observation {t} has {} entries, expected {obs_dim}", h.observation.len()),
                ));
            }
            observations[t].copy_from_slice(&h.observation);
            phi[t] = h.phi;
            actions.push(h.action.clone());
        }
        Ok(Self {
            observations,
            phi,
            valid_len,
            failed,
            collected_at_age,
            actions,
        })
    }

    pub fn horizon(&self) -> usize {
        self.observations.len()
    }

    pub fn label(&self) -> f64 {
        if self.failed {
            1.0
        } else {
            0.0
        }
    }

    /// The first `l` pairs, as fed to the predictor.
    pub fn prefix(&self, l: usize) -> Vec<(Vec<f64>, f64)> {
        self.observations
            .iter()
            .zip(&self.phi)
            .take(l)
            .map(|(o, &p)| (o.clone(), p))
            .collect()
    }

    /// Replays the stored actions from the stored start and returns the label
    /// the environment assigns.
    pub fn replay_label(&self, spec: &EnvSpec) -> Result<bool> {
        let mut state = EnvState::at(self.observations[0].clone());
        for a in &self.actions {
            if state.done {
                break;
            }
            env::step(spec, &mut state, a)?;
        }
        Ok(state.failed && state.step_index <= self.horizon())
    }
}

/// Append-only collection of labeled sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceStore {
    obs_dim: usize,
    horizon: usize,
    sequences: Vec<LabeledSequence>,
    failures: usize,
}

impl SequenceStore {
    pub fn new(obs_dim: usize, horizon: usize) -> Self {
        Self {
            obs_dim,
            horizon,
            sequences: Vec::new(),
            failures: 0,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn failures(&self) -> usize {
        self.failures
    }

    pub fn successes(&self) -> usize {
        self.sequences.len() - self.failures
    }

    pub fn failure_fraction(&self) -> f64 {
        if self.sequences.is_empty() {
            0.0
        } else {
            self.failures as f64 / self.sequences.len() as f64
        }
    }

    pub fn sequences(&self) -> &[LabeledSequence] {
        &self.sequences
    }

    pub fn get(&self, i: usize) -> &LabeledSequence {
        &self.sequences[i]
    }

    pub fn max_age(&self) -> u64 {
        self.sequences.iter().map(|s| s.collected_at_age).max().unwrap_or(0)
    }

    pub fn push(&mut self, seq: LabeledSequence) -> Result<()> {
        if seq.horizon() != self.horizon || seq.observations.iter().any(|o| o.len() != self.obs_dim) {
            return Err(Error::shape(
                "sequence store",
                format!(
                    "store holds H={} obs_dim={}, sequence has H={}",
                    self.horizon,
                    self.obs_dim,
                    seq.horizon()
                ),
            ));
        }
        if seq.failed {
            self.failures += 1;
        }
        self.sequences.push(seq);
        Ok(())
    }

    /// New store holding the sequences at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let mut out = Self::new(self.obs_dim, self.horizon);
        for &i in idx {
            out.push(self.sequences[i].clone()).expect("same shape");
        }
        out
    }

    /// Per-dimension mean and standard deviation over valid observations.
    pub fn observation_stats(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.obs_dim;
        let mut sum = vec![0.0; d];
        let mut sq = vec![0.0; d];
        let mut n = 0usize;
        for s in &self.sequences {
            for o in &s.observations[..s.valid_len] {
                for k in 0..d {
                    sum[k] += o[k];
                    sq[k] += o[k] * o[k];
                }
                n += 1;
            }
        }
        if n == 0 {
            return (vec![0.0; d], vec![1.0; d]);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / n as f64 - m * m).max(0.0);
                if var > 1e-12 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        (mean, std)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{SEQ_HEADER}");
        let _ = writeln!(out, "obs_dim {}", self.obs_dim);
        let _ = writeln!(out, "horizon {}", self.horizon);
        let _ = writeln!(out, "count {}", self.sequences.len());
        for s in &self.sequences {
            let _ = writeln!(out, "seq {} {} {}", u8::from(s.failed), s.valid_len, s.collected_at_age);
            for t in 0..s.valid_len {
                let mut fields: Vec<String> = s.observations[t].iter().map(|x| format!("{x:?}")).collect();
                fields.push(format!("{:?}", s.phi[t]));
                fields.push("|".into());
                fields.extend(s.actions[t].iter().map(|x| format!("{x:?}")));
                let _ = writeln!(out, "{}", fields.join(" "));
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let err = |line: usize, detail: String| Error::Parse {
            what: "sequence store".into(),
            line,
            detail,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, h)) if h == SEQ_HEADER => {}
            Some((n, h)) => return Err(err(n, format!("bad header `{h}`"))),
            None => return Err(err(1, "empty file".into())),
        }
        let mut field = |key: &str| -> Result<usize> {
            let (n, line) = lines.next().ok_or_else(|| err(0, format!("missing `{key}`")))?;
            line.strip_prefix(key)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| err(n, format!("expected `{key} <count>`, got `{line}`")))
        };
        let obs_dim = field("obs_dim")?;
        let horizon = field("horizon")?;
        let count = field("count")?;
        let mut store = Self::new(obs_dim, horizon);
        let parse_f = |n: usize, v: &str| v.parse::<f64>().map_err(|_| err(n, format!("bad number `{v}`")));
        loop {
            let (n, line) = lines.next().ok_or_else(|| err(0, "missing `end`".into()))?;
            if line == "end" {
                break;
            }
            let head: Vec<&str> = line.split(' ').collect();
            if head.len() != 4 || head[0] != "seq" {
                return Err(err(n, format!("expected `seq <c> <valid_len> <age>`, got `{line}`")));
            }
            let failed = match head[1] {
                "0" => false,
                "1" => true,
                other => return Err(err(n, format!("bad label `{other}`"))),
            };
            let valid_len: usize = head[2].parse().map_err(|_| err(n, "bad valid_len".into()))?;
            let age: u64 = head[3].parse().map_err(|_| err(n, "bad age".into()))?;
            if valid_len > horizon {
                return Err(err(n, format!("valid_len {valid_len} exceeds horizon {horizon}")));
            }
            let mut seq = LabeledSequence {
                observations: vec![vec![0.0; obs_dim]; horizon],
                phi: vec![0.0; horizon],
                valid_len,
                failed,
                collected_at_age: age,
                actions: Vec::with_capacity(valid_len),
            };
            for t in 0..valid_len {
                let (n, line) = lines.next().ok_or_else(|| err(0, "truncated sequence".into()))?;
                let (state, action) = line
                    .split_once(" | ")
                    .ok_or_else(|| err(n, "missing action separator".into()))?;
                let state: Vec<f64> = state.split(' ').map(|v| parse_f(n, v)).collect::<Result<_>>()?;
                if state.len() != obs_dim + 1 {
                    return Err(err(n, format!("expected {} state fields, got {}", obs_dim + 1, state.len())));
                }
                seq.observations[t].copy_from_slice(&state[..obs_dim]);
                seq.phi[t] = state[obs_dim];
                seq.actions
                    .push(action.split(' ').map(|v| parse_f(n, v)).collect::<Result<_>>()?);
            }
            store.push(seq)?;
        }
        if store.len() != count {
            return Err(err(0, format!("header says {count} sequences, found {}", store.len())));
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Window of episodes over which the threshold mean reward is taken.
pub const REWARD_WINDOW: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdOutcome {
    pub ctx: AgentContext,
    pub reached: bool,
    /// Mean over the last [`REWARD_WINDOW`] episodes when training stopped.
    pub mean_reward: f64,
    pub episodes: usize,
}

/// Trains with ordinary sampling until the windowed mean reward exceeds
/// `r_threshold` or `max_steps` environment steps have been used.
pub fn train_until_threshold(trainer: &mut Trainer, r_threshold: f64, max_steps: u64) -> Result<ThresholdOutcome> {
    if max_steps == 0 {
        return Err(Error::InvalidArgument("max_steps must be positive".into()));
    }
    let start_age = trainer.age();
    let start_episodes = trainer.episodes.len();
    loop {
        trainer.run_episode(0)?;
        let played = trainer.episodes.len() - start_episodes;
        let mean = trainer.recent_mean_reward(REWARD_WINDOW.min(played)).unwrap_or(f64::NEG_INFINITY);
        let reached = played >= REWARD_WINDOW && mean > r_threshold;
        if reached || trainer.age() - start_age >= max_steps {
            return Ok(ThresholdOutcome {
                ctx: trainer.ctx,
                reached,
                mean_reward: mean,
                episodes: played,
            });
        }
    }
}

/// Keeps training for `n_sequences` more episodes, recording each episode's
/// first `horizon` steps.
pub fn harvest(trainer: &mut Trainer, n_sequences: usize, horizon: usize) -> Result<SequenceStore> {
    if horizon < 2 {
        return Err(Error::InvalidArgument(format!("horizon must be at least 2, got {horizon}")));
    }
    if horizon > trainer.spec.t_max {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} exceeds the episode cap {}",
            trainer.spec.t_max
        )));
    }
    let mut store = SequenceStore::new(trainer.spec.obs_dim, horizon);
    for _ in 0..n_sequences {
        let out = trainer.run_episode(horizon)?;
        let failed_at = out.summary.failed.then_some(out.summary.length);
        store.push(LabeledSequence::from_history(
            &out.history,
            failed_at,
            horizon,
            trainer.spec.obs_dim,
            out.summary.age_at_end,
        )?)?;
    }
    Ok(store)
}

/// `2^(−(age_now − age)/half_life)`. An infinite half-life gives 1.
pub fn recency_weight(age_now: u64, age: u64, half_life: f64) -> f64 {
    if half_life.is_infinite() {
        return 1.0;
    }
    let delta = age_now.saturating_sub(age) as f64;
    (-delta / half_life).exp2()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubsampleSpec {
    pub target_size: usize,
    pub ratio_lo: f64,
    pub ratio_hi: f64,
    /// Recency half-life in environment steps; `f64::INFINITY` disables it.
    pub half_life: f64,
    pub age_now: u64,
}

/// Recency-weighted sampling without replacement with class rebalancing.
///
/// Every sequence gets a random priority drawn with weight
/// [`recency_weight`] (the Efraimidis–Spirakis key `ln(u)/w`). Class sizes are
/// then chosen as large as possible subject to the target size and the
/// failure-fraction band, and each class is filled in priority order, so the
/// majority label is the one cut back.
pub fn balanced_subsample(store: &SequenceStore, spec: &SubsampleSpec, rng: &mut Rng) -> Result<SequenceStore> {
    if store.failures() == 0 || store.successes() == 0 {
        return Err(Error::SingleLabel);
    }
    if !(0.0 < spec.ratio_lo && spec.ratio_lo < spec.ratio_hi && spec.ratio_hi < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < ratio_lo < ratio_hi < 1, got {} and {}",
            spec.ratio_lo, spec.ratio_hi
        )));
    }
    if !(spec.half_life > 0.0) {
        return Err(Error::InvalidArgument("half_life must be positive".into()));
    }
    let mut keyed: Vec<(f64, usize)> = store
        .sequences()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let w = recency_weight(spec.age_now, s.collected_at_age, spec.half_life);
            let u = 1.0 - rng.unit();
            (u.ln() / w, i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let (n_fail, n_succ) = class_sizes(store.failures(), store.successes(), spec)
        .ok_or_else(|| Error::InvalidArgument("no class sizes satisfy the ratio band".into()))?;
    let mut fails = Vec::with_capacity(n_fail);
    let mut succs = Vec::with_capacity(n_succ);
    for &(_, i) in &keyed {
        if store.get(i).failed {
            if fails.len() < n_fail {
                fails.push(i);
            }
        } else if succs.len() < n_succ {
            succs.push(i);
        }
    }
    let mut picked: Vec<usize> = fails.into_iter().chain(succs).collect();
    picked.sort_unstable();
    Ok(store.subset(&picked))
}

/// Largest `(failures, successes)` within the budget whose failure fraction
/// lies in the band. Ties prefer more failures.
fn class_sizes(f_avail: usize, s_avail: usize, spec: &SubsampleSpec) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for f in (1..=f_avail.min(spec.target_size)).rev() {
        let ff = f as f64;
        let s_hi = ((ff * (1.0 - spec.ratio_lo) / spec.ratio_lo).floor() as usize)
            .min(s_avail)
            .min(spec.target_size - f);
        if s_hi == 0 {
            continue;
        }
        let frac = ff / (ff + s_hi as f64);
        if frac < spec.ratio_lo || frac > spec.ratio_hi {
            continue;
        }
        if best.is_none_or(|(bf, bs)| f + s_hi > bf + bs) {
            best = Some((f, s_hi));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(o: f64) -> HistoryStep {
        HistoryStep {
            observation: vec![o, -o],
            phi: 0.25,
            action: vec![0.0],
        }
    }

    #[test]
    fn early_failure_is_padded() {
        let hist: Vec<_> = (1..=3).map(|i| step(i as f64)).collect();
        let s = LabeledSequence::from_history(&hist, Some(3), 8, 2, 10).unwrap();
        assert!(s.failed);
        assert_eq!(s.valid_len, 3);
        for t in 3..8 {
            assert_eq!(s.observations[t], vec![0.0, 0.0]);
            assert_eq!(s.phi[t], 0.0);
        }
    }

    #[test]
    fn survivor_fills_horizon() {
        let hist: Vec<_> = (0..8).map(|i| step(i as f64)).collect();
        let s = LabeledSequence::from_history(&hist, None, 8, 2, 10).unwrap();
        assert!(!s.failed);
        assert_eq!(s.valid_len, 8);
        let late = LabeledSequence::from_history(&hist, Some(20), 8, 2, 10).unwrap();
        assert!(!late.failed);
    }

    #[test]
    fn class_sizes_respect_band() {
        let spec = SubsampleSpec {
            target_size: 100,
            ratio_lo: 0.3,
            ratio_hi: 0.7,
            half_life: f64::INFINITY,
            age_now: 0,
        };
        assert_eq!(class_sizes(5, 95, &spec), Some((5, 11)));
        assert_eq!(class_sizes(95, 5, &spec), Some((11, 5)));
        assert_eq!(class_sizes(50, 500, &spec), Some((50, 50)));
    }

    #[test]
    fn recency_limits() {
        assert_eq!(recency_weight(100, 100, 10.0), 1.0);
        assert_eq!(recency_weight(110, 100, 10.0), 0.5);
        assert_eq!(recency_weight(1_000_000, 0, f64::INFINITY), 1.0);
    }
}
