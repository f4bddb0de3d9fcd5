//! Shared fixtures for the criterion benchmarks.

use coachnet::collector::LabeledSequence;
use coachnet::numcore::{Matrix, Rng};
use coachnet::ppo::{Batch, HistoryStep};

pub fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal(0.0, 1.0)).collect()).expect("sized")
}

/// A PPO batch with random observations, actions and advantages.
pub fn random_batch(n: usize, obs_dim: usize, action_dim: usize, rng: &mut Rng) -> Batch {
    let mut col = |s: f64| (0..n).map(|_| rng.normal(0.0, s)).collect::<Vec<_>>();
    let log_probs_old = col(1.0).iter().map(|x| x - 1.5).collect();
    let advantages = col(1.0);
    let returns = col(5.0);
    let values_old = col(5.0);
    Batch {
        observations: random_matrix(n, obs_dim, rng),
        actions: random_matrix(n, action_dim, rng),
        log_probs_old,
        advantages,
        returns,
        values_old,
    }
}

/// Random-walk sequences; every fifth one fails halfway.
pub fn random_sequences(n: usize, obs_dim: usize, horizon: usize, rng: &mut Rng) -> Vec<LabeledSequence> {
    (0..n)
        .map(|i| {
            let failed = i % 5 == 0;
            let len = if failed { horizon / 2 } else { horizon };
            let history: Vec<HistoryStep> = (0..len)
                .map(|_| HistoryStep {
                    observation: (0..obs_dim).map(|_| rng.normal(0.0, 1.0)).collect(),
                    phi: 0.1,
                    action: vec![0.0],
                })
                .collect();
            LabeledSequence::from_history(&history, failed.then_some(len), horizon, obs_dim, 0).expect("valid history")
        })
        .collect()
}
