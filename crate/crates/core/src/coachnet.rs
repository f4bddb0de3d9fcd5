//! Failure predictor.
//!
//! Given the first `l` `(observation, φ)` pairs of an episode, predicts the
//! probability that the episode fails within horizon `H`.
//!
//! * **WSP**: a two-layer LSTM reads the `l` observed pairs, then rolls out
//!   autoregressively (each predicted state fed back as the next input, φ held
//!   at its last observed value) to produce states `l..H−1`. A feed-forward
//!   head reads `concat(φ, observed, predicted)` and emits a logit.
//! * **MLP**: the head reads `concat(φ, observed)` directly.
//!
//! Training minimizes `k1·L1 + k2·L2`, where `L1` is the state-prediction MSE
//! over steps `l..H−1` restricted to each sequence's valid steps and `L2` is
//! binary cross-entropy on the failure label.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::checkpoint::CheckpointBlob;
use crate::collector::{LabeledSequence, SequenceStore};
use crate::error::{Error, Result};
use crate::numcore::{sigmoid, Activation, Adam, LayerSpec, Lstm, LstmState, Matrix, Mlp, ParamGraph, Rng, Tape, Var};

const SECTION: &str = "coachnet";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Wsp,
    Mlp,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Wsp => "wsp",
            Variant::Mlp => "mlp",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wsp" => Ok(Variant::Wsp),
            "mlp" => Ok(Variant::Mlp),
            other => Err(Error::Config(format!("unknown predictor variant `{other}` (expected wsp or mlp)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoachConfig {
    pub variant: Variant,
    /// Observed prefix length.
    pub l: usize,
    /// Prediction horizon `H`.
    pub horizon: usize,
    pub rnn_widths: Vec<usize>,
    pub head_widths: Vec<usize>,
    pub k1: f64,
    pub k2: f64,
    pub lr: f64,
    pub minibatch: usize,
    pub holdout_fraction: f64,
    /// Global gradient-norm clip; `0` disables.
    pub max_grad_norm: f64,
}

impl CoachConfig {
    pub fn wsp(horizon: usize) -> Self {
        Self {
            variant: Variant::Wsp,
            l: 5,
            horizon,
            rnn_widths: vec![32, 32],
            head_widths: vec![64, 32],
            k1: 1.0,
            k2: 1.0,
            lr: 1e-3,
            minibatch: 64,
            holdout_fraction: 0.2,
            max_grad_norm: 1.0,
        }
    }

    pub fn mlp(horizon: usize) -> Self {
        Self {
            variant: Variant::Mlp,
            head_widths: vec![64, 64, 32],
            ..Self::wsp(horizon)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l < 1 || self.l >= self.horizon {
            return Err(Error::Config(format!("need 1 <= l < H, got l={} H={}", self.l, self.horizon)));
        }
        if self.k1 < 0.0 || self.k2 <= 0.0 {
            return Err(Error::Config(format!("need k1 >= 0 and k2 > 0, got {} and {}", self.k1, self.k2)));
        }
        if self.head_widths.contains(&0) || self.rnn_widths.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.variant == Variant::Wsp && self.rnn_widths.is_empty() {
            return Err(Error::Config("the WSP variant needs at least one recurrent layer".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config("holdout_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FailurePrediction {
    pub probability: f64,
    /// Predicted observations for steps `l..H−1` (WSP only).
    pub predicted_states: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossValues {
    pub total: f64,
    pub l1: f64,
    pub l2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeparationReport {
    pub mean_failed: f64,
    pub mean_success: f64,
    pub auc: f64,
    pub n_failed: usize,
    pub n_success: usize,
}

impl SeparationReport {
    pub fn gap(&self) -> f64 {
        self.mean_failed - self.mean_success
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingReport {
    /// Training-split loss after each epoch.
    pub epochs: Vec<LossValues>,
    pub train_size: usize,
    /// Held-out probabilities split by true label.
    pub heldout_failed: Vec<f64>,
    pub heldout_success: Vec<f64>,
    pub heldout: Option<SeparationReport>,
}

/// Normalized, batch-ready view of a set of sequences.
struct SeqBatch {
    /// `H` matrices of `B x obs_dim`, pads zero.
    states: Vec<Matrix>,
    /// `H` matrices of `B x 1`.
    phis: Vec<Matrix>,
    /// `φ` held during the rollout, `B x 1`.
    phi_const: Matrix,
    /// `H` masks of `B x obs_dim`: 1 where the step is valid.
    masks: Vec<Matrix>,
    labels: Matrix,
}

#[derive(Clone, Debug)]
pub struct CoachModel {
    pub graph: ParamGraph,
    config: CoachConfig,
    obs_dim: usize,
    obs_mean: Vec<f64>,
    obs_std: Vec<f64>,
    lstm: Option<Lstm>,
    proj: Option<Mlp>,
    head: Mlp,
    pub trained_on_through_age: u64,
}

impl CoachModel {
    pub fn new(config: CoachConfig, obs_dim: usize, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut graph = ParamGraph::new();
        let (lstm, proj) = match config.variant {
            Variant::Wsp => {
                let lstm = Lstm::new(&mut graph, "state.lstm", obs_dim + 1, &config.rnn_widths, rng)?;
                let proj = Mlp::new(&mut graph, "state.proj", proj_spec(&config, obs_dim), 0.1, rng)?;
                (Some(lstm), Some(proj))
            }
            Variant::Mlp => (None, None),
        };
        let head = Mlp::new(&mut graph, "head", head_spec(&config, obs_dim), 0.1, rng)?;
        Ok(Self {
            graph,
            obs_dim,
            obs_mean: vec![0.0; obs_dim],
            obs_std: vec![1.0; obs_dim],
            lstm,
            proj,
            head,
            config,
            trained_on_through_age: 0,
        })
    }

    fn bind(config: CoachConfig, obs_dim: usize, graph: ParamGraph) -> Result<Self> {
        config.validate()?;
        let (lstm, proj) = match config.variant {
            Variant::Wsp => (
                Some(Lstm::bind(&graph, "state.lstm", obs_dim + 1, &config.rnn_widths)?),
                Some(Mlp::bind(&graph, "state.proj", proj_spec(&config, obs_dim))?),
            ),
            Variant::Mlp => (None, None),
        };
        let head = Mlp::bind(&graph, "head", head_spec(&config, obs_dim))?;
        if graph.len() != count_params(&config) {
            return Err(Error::shape(
                "coachnet checkpoint",
                format!("{} parameter blocks do not match a {} model", graph.len(), config.variant),
            ));
        }
        Ok(Self {
            graph,
            obs_dim,
            obs_mean: vec![0.0; obs_dim],
            obs_std: vec![1.0; obs_dim],
            lstm,
            proj,
            head,
            config,
            trained_on_through_age: 0,
        })
    }

    pub fn config(&self) -> &CoachConfig {
        &self.config
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn head(&self) -> &Mlp {
        &self.head
    }

    pub fn normalizer(&self) -> (&[f64], &[f64]) {
        (&self.obs_mean, &self.obs_std)
    }

    pub fn set_normalizer(&mut self, mean: Vec<f64>, std: Vec<f64>) -> Result<()> {
        if mean.len() != self.obs_dim || std.len() != self.obs_dim || std.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidArgument("normalizer must match obs_dim with positive std".into()));
        }
        self.obs_mean = mean;
        self.obs_std = std;
        Ok(())
    }

    /// Freezes observation normalization at the statistics of `store`.
    pub fn fit_normalizer(&mut self, store: &SequenceStore) -> Result<()> {
        let (mean, std) = store.observation_stats();
        self.set_normalizer(mean, std)
    }

    fn normalize(&self, obs: &[f64]) -> Vec<f64> {
        obs.iter()
            .zip(self.obs_mean.iter().zip(&self.obs_std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.obs_mean.iter().zip(&self.obs_std))
            .map(|(x, (m, s))| x * s + m)
            .collect()
    }

    fn batch(&self, seqs: &[&LabeledSequence]) -> Result<SeqBatch> {
        let h = self.config.horizon;
        let d = self.obs_dim;
        let b = seqs.len();
        if b == 0 {
            return Err(Error::InvalidArgument("empty predictor batch".into()));
        }
        let mut states = vec![Matrix::zeros(b, d); h];
        let mut phis = vec![Matrix::zeros(b, 1); h];
        let mut masks = vec![Matrix::zeros(b, d); h];
        let mut phi_const = Matrix::zeros(b, 1);
        let mut labels = Matrix::zeros(b, 1);
        for (r, s) in seqs.iter().enumerate() {
            if s.horizon() != h || s.observations[0].len() != d {
                return Err(Error::shape(
                    "predictor batch",
                    format!("sequence is H={} obs_dim={}, model expects H={h} obs_dim={d}", s.horizon(), s.observations[0].len()),
                ));
            }
            for t in 0..s.valid_len {
                states[t].row_mut(r).copy_from_slice(&self.normalize(&s.observations[t]));
                phis[t].set(r, 0, s.phi[t]);
                masks[t].row_mut(r).fill(1.0);
            }
            let last = s.valid_len.min(self.config.l).max(1) - 1;
            phi_const.set(r, 0, s.phi[last]);
            labels.set(r, 0, s.label());
        }
        Ok(SeqBatch {
            states,
            phis,
            phi_const,
            masks,
            labels,
        })
    }

    /// Records the forward pass; returns the logit node (`B x 1`) and the
    /// predicted normalized states for steps `l..H−1`.
    fn forward(&self, tape: &mut Tape, batch: &SeqBatch) -> Result<(Var, Vec<Var>)> {
        let l = self.config.l;
        let h = self.config.horizon;
        let b = batch.labels.rows();
        let phi_c = tape.input(batch.phi_const.clone());
        let observed: Vec<Var> = batch.states[..l].iter().map(|m| tape.input(m.clone())).collect();
        let mut preds = Vec::new();
        if let (Some(lstm), Some(proj)) = (&self.lstm, &self.proj) {
            let mut state: LstmState = lstm.zero_state(tape, b);
            let mut out = None;
            for t in 0..l {
                let phi_t = tape.input(batch.phis[t].clone());
                let x = tape.concat_cols(&[observed[t], phi_t])?;
                let (o, next) = lstm.step(tape, &self.graph, x, &state)?;
                out = Some(o);
                state = next;
            }
            let mut prev = observed[l - 1];
            let mut o = out.expect("l >= 1");
            for t in l..h {
                let delta = proj.forward(tape, &self.graph, o)?;
                let s_hat = tape.add(prev, delta)?;
                preds.push(s_hat);
                prev = s_hat;
                if t + 1 < h {
                    let x = tape.concat_cols(&[s_hat, phi_c])?;
                    let (next_o, next) = lstm.step(tape, &self.graph, x, &state)?;
                    o = next_o;
                    state = next;
                }
            }
        }
        let mut parts = vec![phi_c];
        parts.extend(&observed);
        parts.extend(&preds);
        let head_in = tape.concat_cols(&parts)?;
        let logit = self.head.forward(tape, &self.graph, head_in)?;
        Ok((logit, preds))
    }

    fn loss_nodes(&self, tape: &mut Tape, batch: &SeqBatch) -> Result<(Var, Var, Option<Var>)> {
        let (logit, preds) = self.forward(tape, batch)?;
        let l2 = tape.bce_with_logits(logit, batch.labels.clone())?;
        if self.config.variant == Variant::Mlp || self.config.k1 == 0.0 {
            let total = tape.scale(l2, self.config.k2);
            return Ok((total, l2, None));
        }
        let l = self.config.l;
        let count: f64 = batch.masks[l..].iter().map(Matrix::sum).sum();
        let weighted_l2 = tape.scale(l2, self.config.k2);
        if count == 0.0 {
            return Ok((weighted_l2, l2, None));
        }
        let mut acc: Option<Var> = None;
        for (k, &p) in preds.iter().enumerate() {
            let t = l + k;
            let target = tape.input(batch.states[t].clone());
            let diff = tape.sub(p, target)?;
            let sq = tape.square(diff);
            let masked = tape.mul_const(sq, batch.masks[t].clone())?;
            let s = tape.sum(masked);
            acc = Some(match acc {
                Some(a) => tape.add(a, s)?,
                None => s,
            });
        }
        let l1 = tape.scale(acc.expect("H > l"), 1.0 / count);
        let weighted_l1 = tape.scale(l1, self.config.k1);
        let total = tape.add(weighted_l1, weighted_l2)?;
        Ok((total, l2, Some(l1)))
    }

    fn values(tape: &Tape, nodes: (Var, Var, Option<Var>)) -> LossValues {
        LossValues {
            total: tape.value(nodes.0).item(),
            l2: tape.value(nodes.1).item(),
            l1: nodes.2.map_or(0.0, |v| tape.value(v).item()),
        }
    }

    /// Composite loss on `seqs`.
    pub fn loss(&self, seqs: &[&LabeledSequence]) -> Result<LossValues> {
        let batch = self.batch(seqs)?;
        let mut tape = Tape::new();
        let nodes = self.loss_nodes(&mut tape, &batch)?;
        Ok(Self::values(&tape, nodes))
    }

    /// Composite loss on `seqs`, leaving its gradient in `self.graph`.
    pub fn loss_and_grad(&mut self, seqs: &[&LabeledSequence]) -> Result<LossValues> {
        let batch = self.batch(seqs)?;
        let mut tape = Tape::new();
        let nodes = self.loss_nodes(&mut tape, &batch)?;
        let vals = Self::values(&tape, nodes);
        self.graph.zero_grad();
        if vals.total.is_finite() {
            tape.backward(nodes.0, &mut self.graph)?;
        }
        Ok(vals)
    }

    /// Failure probability from an `l`-step prefix of `(observation, φ)`.
    pub fn predict(&self, prefix: &[(Vec<f64>, f64)]) -> Result<FailurePrediction> {
        let l = self.config.l;
        if prefix.len() != l {
            return Err(Error::InvalidArgument(format!("prefix has {} steps, predictor needs {l}", prefix.len())));
        }
        let mut seq = LabeledSequence {
            observations: vec![vec![0.0; self.obs_dim]; self.config.horizon],
            phi: vec![0.0; self.config.horizon],
            valid_len: l,
            failed: false,
            collected_at_age: 0,
            actions: Vec::new(),
        };
        for (t, (o, p)) in prefix.iter().enumerate() {
            if o.len() != self.obs_dim {
                return Err(Error::shape(
                    "predictor prefix",
                    format!("observation {t} has {} entries, expected {}", o.len(), self.obs_dim),
                ));
            }
            seq.observations[t].clone_from(o);
            seq.phi[t] = *p;
        }
        let batch = self.batch(&[&seq])?;
        let mut tape = Tape::new();
        let (logit, preds) = self.forward(&mut tape, &batch)?;
        Ok(FailurePrediction {
            probability: sigmoid(tape.value(logit).item()),
            predicted_states: preds.iter().map(|&p| self.denormalize(tape.value(p).data())).collect(),
        })
    }

    /// Failure probabilities for every sequence's prefix.
    pub fn probabilities(&self, seqs: &[&LabeledSequence]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(seqs.len());
        for chunk in seqs.chunks(256) {
            let batch = self.batch(chunk)?;
            let mut tape = Tape::new();
            let (logit, _) = self.forward(&mut tape, &batch)?;
            out.extend(tape.value(logit).data().iter().map(|&z| sigmoid(z)));
        }
        Ok(out)
    }

    /// Trains on `store` for `epochs` passes with a held-out split.
    ///
    /// Works on a private copy; `self` is replaced only when every epoch
    /// finishes with finite losses.
    pub fn train(&mut self, store: &SequenceStore, epochs: usize, rng: &mut Rng) -> Result<TrainingReport> {
        if store.is_empty() {
            return Err(Error::InvalidArgument("cannot train on an empty store".into()));
        }
        let mut idx: Vec<usize> = (0..store.len()).collect();
        rng.shuffle(&mut idx);
        let n_hold = (store.len() as f64 * self.config.holdout_fraction).round() as usize;
        let n_hold = n_hold.min(store.len() - 1);
        let (held, train) = idx.split_at(n_hold);
        let train_seqs: Vec<&LabeledSequence> = train.iter().map(|&i| store.get(i)).collect();
        let mut work = self.clone();
        let mut adam = Adam::with_lr(self.config.lr);
        let mut order: Vec<usize> = (0..train_seqs.len()).collect();
        let mut report = TrainingReport {
            epochs: Vec::with_capacity(epochs),
            train_size: train_seqs.len(),
            heldout_failed: Vec::new(),
            heldout_success: Vec::new(),
            heldout: None,
        };
        let mb = self.config.minibatch.max(1);
        for epoch in 0..epochs {
            rng.shuffle(&mut order);
            for chunk in order.chunks(mb) {
                let mini: Vec<&LabeledSequence> = chunk.iter().map(|&i| train_seqs[i]).collect();
                let vals = work.loss_and_grad(&mini)?;
                if !vals.total.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        detail: format!("predictor loss {} (L1 {}, L2 {})", vals.total, vals.l1, vals.l2),
                    });
                }
                if self.config.max_grad_norm > 0.0 {
                    work.graph.clip_grad_norm(self.config.max_grad_norm);
                }
                adam.step(&mut work.graph).map_err(|e| Error::Diverged {
                    epoch,
                    detail: e.to_string(),
                })?;
            }
            let mut sum = LossValues::default();
            for chunk in train_seqs.chunks(256) {
                let v = work.loss(chunk)?;
                let w = chunk.len() as f64 / train_seqs.len() as f64;
                sum.total += v.total * w;
                sum.l1 += v.l1 * w;
                sum.l2 += v.l2 * w;
            }
            if !sum.total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("training-split loss {}", sum.total),
                });
            }
            report.epochs.push(sum);
        }
        if !held.is_empty() {
            let held_seqs: Vec<&LabeledSequence> = held.iter().map(|&i| store.get(i)).collect();
            let probs = work.probabilities(&held_seqs)?;
            for (s, p) in held_seqs.iter().zip(probs) {
                if s.failed {
                    report.heldout_failed.push(p);
                } else {
                    report.heldout_success.push(p);
                }
            }
            report.heldout = separation(&report.heldout_failed, &report.heldout_success).ok();
        }
        work.trained_on_through_age = work.trained_on_through_age.max(store.max_age());
        *self = work;
        Ok(report)
    }

    pub fn snapshot(&self) -> CheckpointBlob {
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let floats = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let c = &self.config;
        CheckpointBlob::new(SECTION, self.graph.clone())
            .with_meta("variant", c.variant)
            .with_meta("obs_dim", self.obs_dim)
            .with_meta("l", c.l)
            .with_meta("horizon", c.horizon)
            .with_meta("rnn_widths", list(&c.rnn_widths))
            .with_meta("head_widths", list(&c.head_widths))
            .with_meta("k1", format!("{:?}", c.k1))
            .with_meta("k2", format!("{:?}", c.k2))
            .with_meta("lr", format!("{:?}", c.lr))
            .with_meta("minibatch", c.minibatch)
            .with_meta("holdout_fraction", format!("{:?}", c.holdout_fraction))
            .with_meta("max_grad_norm", format!("{:?}", c.max_grad_norm))
            .with_meta("obs_mean", floats(&self.obs_mean))
            .with_meta("obs_std", floats(&self.obs_std))
            .with_meta("trained_on_through_age", self.trained_on_through_age)
    }

    pub fn from_snapshot(blob: &CheckpointBlob) -> Result<Self> {
        blob.expect_section(SECTION)?;
        let usizes = |key: &str| -> Result<Vec<usize>> {
            let raw = blob.meta(key)?;
            if raw.is_empty() {
                return Ok(Vec::new());
            }
            raw.split(',')
                .map(|w| w.parse().map_err(|_| Error::Config(format!("bad `{key}` entry `{w}`"))))
                .collect()
        };
        let floats = |key: &str| -> Result<Vec<f64>> {
            blob.meta(key)?
                .split(',')
                .map(|w| w.parse().map_err(|_| Error::Config(format!("bad `{key}` entry `{w}`"))))
                .collect()
        };
        let config = CoachConfig {
            variant: blob.meta("variant")?.parse()?,
            l: blob.meta_parse("l")?,
            horizon: blob.meta_parse("horizon")?,
            rnn_widths: usizes("rnn_widths")?,
            head_widths: usizes("head_widths")?,
            k1: blob.meta_parse("k1")?,
            k2: blob.meta_parse("k2")?,
            lr: blob.meta_parse("lr")?,
            minibatch: blob.meta_parse("minibatch")?,
            holdout_fraction: blob.meta_parse("holdout_fraction")?,
            max_grad_norm: blob.meta_parse("max_grad_norm")?,
        };
        let mut model = Self::bind(config, blob.meta_parse("obs_dim")?, blob.params.clone())?;
        model.set_normalizer(floats("obs_mean")?, floats("obs_std")?)?;
        model.trained_on_through_age = blob.meta_parse("trained_on_through_age")?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.snapshot().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_snapshot(&CheckpointBlob::load(path)?)
    }
}

fn proj_spec(config: &CoachConfig, obs_dim: usize) -> LayerSpec {
    let width = *config.rnn_widths.last().expect("validated");
    LayerSpec::new(width, &[], obs_dim, Activation::Identity, Activation::Identity)
}

fn head_spec(config: &CoachConfig, obs_dim: usize) -> LayerSpec {
    let input = match config.variant {
        Variant::Wsp => 1 + config.horizon * obs_dim,
        Variant::Mlp => 1 + config.l * obs_dim,
    };
    LayerSpec::new(input, &config.head_widths, 1, Activation::Tanh, Activation::Identity)
}

fn count_params(config: &CoachConfig) -> usize {
    let head = 2 * (config.head_widths.len() + 1);
    match config.variant {
        Variant::Wsp => head + 3 * config.rnn_widths.len() + 2,
        Variant::Mlp => head,
    }
}

/// Mean probability per label and the rank AUC (ties count one half).
pub fn separation(failed: &[f64], success: &[f64]) -> Result<SeparationReport> {
    if failed.is_empty() || success.is_empty() {
        return Err(Error::SingleLabel);
    }
    let mut all: Vec<(f64, bool)> = failed
        .iter()
        .map(|&p| (p, true))
        .chain(success.iter().map(|&p| (p, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg_rank * all[i..=j].iter().filter(|x| x.1).count() as f64;
        i = j + 1;
    }
    let nf = failed.len() as f64;
    let ns = success.len() as f64;
    Ok(SeparationReport {
        mean_failed: failed.iter().sum::<f64>() / nf,
        mean_success: success.iter().sum::<f64>() / ns,
        auc: (rank_sum - nf * (nf + 1.0) / 2.0) / (nf * ns),
        n_failed: failed.len(),
        n_success: success.len(),
    })
}

/// Separation of `model` on every sequence in `store`.
pub fn evaluate_separation(model: &CoachModel, store: &SequenceStore) -> Result<SeparationReport> {
    let seqs: Vec<&LabeledSequence> = store.sequences().iter().collect();
    let probs = model.probabilities(&seqs)?;
    let mut failed = Vec::new();
    let mut success = Vec::new();
    for (s, p) in seqs.iter().zip(probs) {
        if s.failed {
            failed.push(p);
        } else {
            success.push(p);
        }
    }
    separation(&failed, &success)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_limits() {
        let r = separation(&[0.5, 0.5], &[0.5, 0.5, 0.5]).unwrap();
        assert_eq!((r.mean_failed, r.mean_success, r.auc), (0.5, 0.5, 0.5));
        let r = separation(&[1.0, 1.0], &[0.0]).unwrap();
        assert_eq!((r.mean_failed, r.mean_success, r.auc), (1.0, 0.0, 1.0));
        let r = separation(&[0.1], &[0.9, 0.05]).unwrap();
        assert_eq!(r.auc, 0.5);
        assert!(separation(&[], &[0.3]).is_err());
    }

    #[test]
    fn parameter_count_matches_construction() {
        for cfg in [CoachConfig::wsp(12), CoachConfig::mlp(12)] {
            let m = CoachModel::new(cfg.clone(), 3, &mut Rng::new(0)).unwrap();
            assert_eq!(m.graph.len(), count_params(&cfg));
        }
    }
}
