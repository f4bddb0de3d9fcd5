//! Generalized advantage estimation.

use crate::env::Trajectory;
use crate::error::{Error, Result};

/// Reward, value estimate and terminal flag for one time step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaeStep {
    pub reward: f64,
    pub value: f64,
    pub done: bool,
}

/// Advantages and returns for one contiguous segment.
///
/// ```text
/// δ_t = r_t + γ·V(s_{t+1})·(1 − done_t) − V(s_t)
/// A_t = δ_t + γ·λ·(1 − done_t)·A_{t+1}
/// R_t = A_t + V(s_t)
/// ```
///
/// `bootstrap` is `V(s_T)` for the state after the last step; it is ignored
/// when the last step is terminal.
pub fn compute_gae(steps: &[GaeStep], bootstrap: f64, gamma: f64, lam: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if steps.is_empty() {
        return Err(Error::InvalidArgument("GAE over an empty segment".into()));
    }
    if !(0.0..=1.0).contains(&gamma) || !(0.0..=1.0).contains(&lam) {
        return Err(Error::InvalidArgument(format!("gamma={gamma}, lambda={lam} outside [0, 1]")));
    }
    let n = steps.len();
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let s = steps[t];
        let live = if s.done { 0.0 } else { 1.0 };
        let delta = s.reward + gamma * next_value * live - s.value;
        next_adv = delta + gamma * lam * live * next_adv;
        adv[t] = next_adv;
        next_value = s.value;
    }
    let returns = adv.iter().zip(steps).map(|(a, s)| a + s.value).collect();
    Ok((adv, returns))
}

/// GAE over a recorded trajectory with an arbitrary value function.
pub fn gae_for_trajectory(
    trajectory: &Trajectory,
    mut value_fn: impl FnMut(&[f64]) -> f64,
    gamma: f64,
    lam: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let steps: Vec<GaeStep> = trajectory
        .steps
        .iter()
        .map(|t| GaeStep {
            reward: t.reward,
            value: value_fn(&t.observation),
            done: t.done,
        })
        .collect();
    let bootstrap = if trajectory.done() { 0.0 } else { value_fn(&trajectory.final_observation) };
    compute_gae(&steps, bootstrap, gamma, lam)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn steps(r: &[f64], v: &[f64], done_last: bool) -> Vec<GaeStep> {
        r.iter()
            .zip(v)
            .enumerate()
            .map(|(i, (&reward, &value))| GaeStep {
                reward,
                value,
                done: done_last && i + 1 == r.len(),
            })
            .collect()
    }

    #[test]
    fn lambda_zero_is_td_error() {
        let s = steps(&[1.0, 0.5, -2.0], &[0.3, 0.1, 0.7], false);
        let (a, _) = compute_gae(&s, 0.4, 0.9, 0.0).unwrap();
        assert_eq!(a[0], 1.0 + 0.9 * 0.1 - 0.3);
        assert_eq!(a[1], 0.5 + 0.9 * 0.7 - 0.1);
        assert_eq!(a[2], -2.0 + 0.9 * 0.4 - 0.7);
    }

    #[test]
    fn unit_discount_zero_values_is_reward_to_go() {
        let s = steps(&[1.0, 2.0, 3.0, 4.0], &[0.0; 4], true);
        let (a, r) = compute_gae(&s, 123.0, 1.0, 1.0).unwrap();
        assert_eq!(a, vec![10.0, 9.0, 7.0, 4.0]);
        assert_eq!(r, a);
    }

    #[test]
    fn three_step_hand_unrolled() {
        // γ = 0.5, λ = 0.5, rewards (1, 2, 3), values (0.5, 1, 1.5), bootstrap 2
        // δ2 = 3 + 0.5·2 − 1.5 = 2.5        A2 = 2.5
        // δ1 = 2 + 0.5·1.5 − 1 = 1.75       A1 = 1.75 + 0.25·2.5 = 2.375
        // δ0 = 1 + 0.5·1 − 0.5 = 1.0        A0 = 1.0 + 0.25·2.375 = 1.59375
        let s = steps(&[1.0, 2.0, 3.0], &[0.5, 1.0, 1.5], false);
        let (a, r) = compute_gae(&s, 2.0, 0.5, 0.5).unwrap();
        assert_eq!(a, vec![1.59375, 2.375, 2.5]);
        assert_eq!(r, vec![2.09375, 3.375, 4.0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(compute_gae(&[], 0.0, 0.9, 0.9).is_err());
        let s = steps(&[1.0], &[0.0], false);
        assert!(compute_gae(&s, 0.0, 1.5, 0.9).is_err());
    }
}
