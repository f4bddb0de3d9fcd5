//! Deterministic toy continuous-control tasks.
//!
//! Both tasks terminate with *failure* when a state predicate trips and with
//! a plain timeout at the episode cap. Initial-state distributions are mixtures
//! with a hard minority whose difficulty shows up in the first observations.
//!
//! **TiltPole** (observation `(θ, ω)`): an inverted pendulum under explicit
//! Euler integration,
//!
//! ```text
//! θ' = θ + dt·ω
//! ω' = ω + dt·((g/L)·sin θ + u/(m·L²))
//! ```
//!
//! failing when `|θ'| > π/2`, rewarded `cos θ' − 0.01·u²`.
//!
//! **SlipperySlope** (observation `(x, v, κ)`): a cart on a low-friction
//! plateau ending in a cliff at `x = 0`,
//!
//! ```text
//! v' = (1 − κ)·v + 0.5·dt·a
//! x' = x + dt·v'
//! ```
//!
//! failing when `x' ≤ 0`, rewarded `v' − 0.05·a²`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numcore::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvKind {
    TiltPole,
    SlipperySlope,
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvKind::TiltPole => "tiltpole",
            EnvKind::SlipperySlope => "slipperyslope",
        })
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiltpole" => Ok(EnvKind::TiltPole),
            "slipperyslope" => Ok(EnvKind::SlipperySlope),
            other => Err(Error::Config(format!(
                "unknown environment `{other}` (expected tiltpole or slipperyslope)"
            ))),
        }
    }
}

/// Static description of a task.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    /// Episode cap; reaching it is a timeout, never a failure.
    pub t_max: usize,
    pub dt: f64,
    pub gravity: f64,
    pub length: f64,
    pub mass: f64,
}

impl EnvSpec {
    pub fn tiltpole() -> Self {
        Self {
            kind: EnvKind::TiltPole,
            obs_dim: 2,
            action_dim: 1,
            action_low: vec![-8.0],
            action_high: vec![8.0],
            t_max: 400,
            dt: 0.02,
            gravity: 9.8,
            length: 1.0,
            mass: 1.0,
        }
    }

    pub fn slipperyslope() -> Self {
        Self {
            kind: EnvKind::SlipperySlope,
            obs_dim: 3,
            action_dim: 1,
            action_low: vec![-1.0],
            action_high: vec![1.0],
            t_max: 300,
            dt: 0.05,
            gravity: 0.0,
            length: 0.0,
            mass: 0.0,
        }
    }

    pub fn by_kind(kind: EnvKind) -> Self {
        match kind {
            EnvKind::TiltPole => Self::tiltpole(),
            EnvKind::SlipperySlope => Self::slipperyslope(),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Ok(Self::by_kind(name.parse()?))
    }

    pub fn name(&self) -> String {
        self.kind.to_string()
    }

    /// Clamps an action into the box bounds.
    pub fn clamp_action(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(&a, (&lo, &hi))| a.clamp(lo, hi))
            .collect()
    }

    /// Mechanical energy `½·m·L²·ω² + m·g·L·cos θ` of a TiltPole observation.
    pub fn pole_energy(&self, obs: &[f64]) -> f64 {
        let (theta, omega) = (obs[0], obs[1]);
        0.5 * self.mass * self.length * self.length * omega * omega
            + self.mass * self.gravity * self.length * theta.cos()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub observation: Vec<f64>,
    pub step_index: usize,
    pub done: bool,
    pub failed: bool,
}

impl EnvState {
    /// A live state at step 0 with the given observation.
    pub fn at(observation: Vec<f64>) -> Self {
        Self {
            observation,
            step_index: 0,
            done: false,
            failed: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub failed: bool,
}

/// Draws an initial state from the task's initial-state distribution.
pub fn reset(spec: &EnvSpec, rng: &mut Rng) -> EnvState {
    let observation = match spec.kind {
        EnvKind::TiltPole => {
            let theta = rng.uniform(-0.6, 0.6);
            let std = if rng.unit() < 0.9 { 0.3 } else { 2.0 };
            let omega = rng.normal(0.0, std);
            vec![theta, omega]
        }
        EnvKind::SlipperySlope => {
            let x = rng.uniform(1.0, 3.0);
            let v = rng.normal(0.0, 0.5);
            let kappa = if rng.unit() < 0.9 {
                rng.uniform(0.02, 0.08)
            } else {
                rng.uniform(0.0005, 0.005)
            };
            vec![x, v, kappa]
        }
    };
    EnvState::at(observation)
}

/// Advances `state` by one step. Actions are clamped to the bounds first.
pub fn step(spec: &EnvSpec, state: &mut EnvState, action: &[f64]) -> Result<StepResult> {
    if state.done {
        return Err(Error::EpisodeDone);
    }
    if action.len() != spec.action_dim {
        return Err(Error::shape(
            "env step",
            format!("action has {} entries, expected {}", action.len(), spec.action_dim),
        ));
    }
    let a = spec.clamp_action(action)[0];
    let (next, reward, tripped) = match spec.kind {
        EnvKind::TiltPole => {
            let (theta, omega) = (state.observation[0], state.observation[1]);
            let accel = (spec.gravity / spec.length) * theta.sin()
                + a / (spec.mass * spec.length * spec.length);
            let theta2 = theta + spec.dt * omega;
            let omega2 = omega + spec.dt * accel;
            let reward = theta2.cos() - 0.01 * a * a;
            (vec![theta2, omega2], reward, theta2.abs() > FRAC_PI_2)
        }
        EnvKind::SlipperySlope => {
            let (x, v, kappa) = (state.observation[0], state.observation[1], state.observation[2]);
            let v2 = (1.0 - kappa) * v + 0.5 * spec.dt * a;
            let x2 = x + spec.dt * v2;
            let reward = v2 - 0.05 * a * a;
            (vec![x2, v2, kappa], reward, x2 <= 0.0)
        }
    };
    state.step_index += 1;
    let at_cap = state.step_index >= spec.t_max;
    state.failed = tripped && !at_cap;
    state.done = tripped || at_cap;
    state.observation = next.clone();
    Ok(StepResult {
        next_observation: next,
        reward,
        done: state.done,
        failed: state.failed,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub failed: bool,
}

/// One episode (or a truncated piece of one).
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub initial: EnvState,
    pub steps: Vec<Transition>,
    pub final_observation: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn failed(&self) -> bool {
        self.steps.last().is_some_and(|t| t.failed)
    }

    pub fn done(&self) -> bool {
        self.steps.last().is_some_and(|t| t.done)
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|t| t.reward).sum()
    }
}

/// Runs `policy` from a fresh reset for at most `max_steps` steps.
pub fn rollout(
    spec: &EnvSpec,
    policy: impl FnMut(&[f64]) -> Vec<f64>,
    rng: &mut Rng,
    max_steps: usize,
) -> Result<Trajectory> {
    let start = reset(spec, rng);
    rollout_from(spec, start, policy, max_steps)
}

/// Runs `policy` from a given live state.
pub fn rollout_from(
    spec: &EnvSpec,
    start: EnvState,
    mut policy: impl FnMut(&[f64]) -> Vec<f64>,
    max_steps: usize,
) -> Result<Trajectory> {
    if max_steps == 0 {
        return Err(Error::InvalidArgument("rollout needs max_steps >= 1".into()));
    }
    let mut state = start.clone();
    let mut steps = Vec::new();
    while !state.done && steps.len() < max_steps {
        let observation = state.observation.clone();
        let action = policy(&observation);
        let r = step(spec, &mut state, &action)?;
        steps.push(Transition {
            observation,
            action,
            reward: r.reward,
            done: r.done,
            failed: r.failed,
        });
    }
    Ok(Trajectory {
        initial: start,
        steps,
        final_observation: state.observation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upright_pole_is_a_fixed_point() {
        let spec = EnvSpec::tiltpole();
        let mut s = EnvState::at(vec![0.0, 0.0]);
        let r = step(&spec, &mut s, &[0.0]).unwrap();
        assert_eq!(r.next_observation, vec![0.0, 0.0]);
        assert_eq!(r.reward, 1.0);
        assert!(!r.done && !r.failed);
    }

    #[test]
    fn tilted_pole_one_step() {
        let spec = EnvSpec::tiltpole();
        let mut s = EnvState::at(vec![0.1, 0.0]);
        let r = step(&spec, &mut s, &[0.0]).unwrap();
        assert_eq!(r.next_observation[0], 0.1);
        // 0.02 · 9.8 · sin(0.1)
        assert!((r.next_observation[1] - 0.019_567_349_662_778_32).abs() < 1e-15);
    }

    #[test]
    fn slope_cliff_fall_fails() {
        let spec = EnvSpec::slipperyslope();
        let mut s = EnvState::at(vec![0.01, -1.0, 0.05]);
        let r = step(&spec, &mut s, &[0.0]).unwrap();
        assert!((r.next_observation[0] - (-0.0375)).abs() < 1e-12);
        assert!(r.failed && r.done);
    }

    #[test]
    fn stepping_done_state_errors() {
        let spec = EnvSpec::slipperyslope();
        let mut s = EnvState::at(vec![0.01, -1.0, 0.05]);
        step(&spec, &mut s, &[0.0]).unwrap();
        assert!(matches!(step(&spec, &mut s, &[0.0]), Err(Error::EpisodeDone)));
    }

    #[test]
    fn actions_are_clamped() {
        let spec = EnvSpec::tiltpole();
        let mut a = EnvState::at(vec![0.0, 0.0]);
        let mut b = a.clone();
        let ra = step(&spec, &mut a, &[100.0]).unwrap();
        let rb = step(&spec, &mut b, &[8.0]).unwrap();
        assert_eq!(ra, rb);
    }

    #[test]
    fn timeout_is_not_failure() {
        let mut spec = EnvSpec::tiltpole();
        spec.t_max = 3;
        let traj = rollout_from(&spec, EnvState::at(vec![0.0, 0.0]), |_| vec![0.0], 10).unwrap();
        assert_eq!(traj.len(), 3);
        assert!(traj.done() && !traj.failed());
    }

    #[test]
    fn names_round_trip() {
        for k in [EnvKind::TiltPole, EnvKind::SlipperySlope] {
            assert_eq!(k.to_string().parse::<EnvKind>().unwrap(), k);
        }
        assert!("cartpole".parse::<EnvKind>().is_err());
    }
}
