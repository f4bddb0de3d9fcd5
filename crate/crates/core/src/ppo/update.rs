//! Clipped-surrogate PPO update.

use super::policy::PolicyModel;
use super::PpoConfig;
use crate::error::{Error, Result};
use crate::numcore::{Adam, Matrix, Rng, Tape, Var};

/// Aligned per-transition training arrays.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub observations: Matrix,
    pub actions: Matrix,
    pub log_probs_old: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub values_old: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.log_probs_old.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs_old.is_empty()
    }

    /// Rescales advantages to zero mean and unit standard deviation.
    /// Batches with fewer than two entries are left untouched.
    pub fn normalize_advantages(&mut self) {
        let n = self.advantages.len();
        if n < 2 {
            return;
        }
        let mean = self.advantages.iter().sum::<f64>() / n as f64;
        let var = self.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt() + 1e-8;
        for a in &mut self.advantages {
            *a = (*a - mean) / std;
        }
    }

    pub fn select(&self, idx: &[usize]) -> Batch {
        let pick_rows = |m: &Matrix| {
            let rows: Vec<Vec<f64>> = idx.iter().map(|&i| m.row(i).to_vec()).collect();
            Matrix::from_rows(&rows).expect("consistent rows")
        };
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Batch {
            observations: pick_rows(&self.observations),
            actions: pick_rows(&self.actions),
            log_probs_old: pick(&self.log_probs_old),
            advantages: pick(&self.advantages),
            returns: pick(&self.returns),
            values_old: pick(&self.values_old),
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty PPO batch".into()));
        }
        if self.observations.rows() != n
            || self.actions.rows() != n
            || self.advantages.len() != n
            || self.returns.len() != n
            || self.values_old.len() != n
        {
            return Err(Error::shape("ppo batch", "arrays are not aligned"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Fraction of the batch with `|ρ − 1| > ε` after the update.
    pub clip_fraction: f64,
    /// `mean((ρ − 1) − ln ρ)` over the batch after the update.
    pub approx_kl: f64,
    pub minibatches: usize,
}

/// Loss node plus diagnostic values for one minibatch.
pub struct PpoLoss {
    pub total: Var,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub ratios: Vec<f64>,
}

/// Records the PPO objective (to be minimized) on `tape`:
///
/// ```text
/// L = −mean(min(ρ·A, clip(ρ, 1−ε, 1+ε)·A)) + c_v·mean((V − R)²) − c_e·H
/// ```
pub fn ppo_loss(
    tape: &mut Tape,
    policy: &PolicyModel,
    batch: &Batch,
    clip_eps: f64,
    value_coef: f64,
    entropy_coef: f64,
) -> Result<PpoLoss> {
    batch.validate()?;
    let n = batch.len();
    let col = |v: &[f64]| Matrix::from_vec(n, 1, v.to_vec());
    let obs = tape.input(batch.observations.clone());
    let nodes = policy.forward(tape, obs)?;
    let logp = policy.log_prob_on_tape(tape, &nodes, batch.actions.clone())?;
    let old = tape.input(col(&batch.log_probs_old)?);
    let log_ratio = tape.sub(logp, old)?;
    let ratio = tape.exp(log_ratio);
    let adv = col(&batch.advantages)?;
    let surr1 = tape.mul_const(ratio, adv.clone())?;
    let clipped = tape.clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
    let surr2 = tape.mul_const(clipped, adv)?;
    let surr = tape.minimum(surr1, surr2)?;
    let surr_mean = tape.mean(surr);
    let policy_term = tape.scale(surr_mean, -1.0);

    let returns = tape.input(col(&batch.returns)?);
    let v_err = tape.sub(nodes.value, returns)?;
    let v_sq = tape.square(v_err);
    let value_term = tape.mean(v_sq);

    let log_std_sum = tape.sum(nodes.log_std);
    let half_log_2pie = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    let entropy = tape.add_scalar(log_std_sum, policy.action_dim() as f64 * half_log_2pie);

    let weighted_value = tape.scale(value_term, value_coef);
    let weighted_entropy = tape.scale(entropy, -entropy_coef);
    let total = tape.add(policy_term, weighted_value)?;
    let total = tape.add(total, weighted_entropy)?;

    Ok(PpoLoss {
        total,
        policy_loss: tape.value(policy_term).item(),
        value_loss: tape.value(value_term).item(),
        entropy: tape.value(entropy).item(),
        ratios: tape.value(ratio).data().to_vec(),
    })
}

/// Runs `cfg.epochs` passes of shuffled minibatch Adam steps on `batch`.
pub fn ppo_update(
    policy: &mut PolicyModel,
    optimizer: &mut Adam,
    batch: &Batch,
    cfg: &PpoConfig,
    rng: &mut Rng,
) -> Result<UpdateStats> {
    batch.validate()?;
    let mut batch = batch.clone();
    batch.normalize_advantages();
    optimizer.lr = cfg.lr;
    let n = batch.len();
    let mb = cfg.minibatch.max(1);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut idx);
        for chunk in idx.chunks(mb) {
            let mini = batch.select(chunk);
            let mut tape = Tape::new();
            let loss = ppo_loss(&mut tape, policy, &mini, cfg.clip_eps, cfg.value_coef, cfg.entropy_coef)?;
            let total = tape.value(loss.total).item();
            if !total.is_finite() {
                return Err(Error::NonFiniteLoss(format!(
                    "PPO loss {total} (policy {}, value {})",
                    loss.policy_loss, loss.value_loss
                )));
            }
            policy.graph.zero_grad();
            tape.backward(loss.total, &mut policy.graph)?;
            if cfg.max_grad_norm > 0.0 {
                policy.graph.clip_grad_norm(cfg.max_grad_norm);
            }
            optimizer.step(&mut policy.graph)?;
            policy.clamp_log_std();
            stats.policy_loss += loss.policy_loss;
            stats.value_loss += loss.value_loss;
            stats.entropy += loss.entropy;
            stats.minibatches += 1;
        }
    }
    if stats.minibatches > 0 {
        let k = stats.minibatches as f64;
        stats.policy_loss /= k;
        stats.value_loss /= k;
        stats.entropy /= k;
    }
    let mut tape = Tape::new();
    let after = ppo_loss(&mut tape, policy, &batch, cfg.clip_eps, cfg.value_coef, cfg.entropy_coef)?;
    let n = after.ratios.len() as f64;
    stats.clip_fraction = after.ratios.iter().filter(|r| (*r - 1.0).abs() > cfg.clip_eps).count() as f64 / n;
    stats.approx_kl = after.ratios.iter().map(|r| (r - 1.0) - r.ln()).sum::<f64>() / n;
    Ok(stats)
}
