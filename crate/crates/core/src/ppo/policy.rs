//! Gaussian actor-critic with a shared tanh trunk.

use std::f64::consts::{E, PI};
use std::path::Path;

use super::AgentContext;
use crate::checkpoint::CheckpointBlob;
use crate::error::{Error, Result};
use crate::numcore::{Activation, LayerSpec, Matrix, Mlp, ParamGraph, ParamId, Rng, Tape, Var};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
const SECTION: &str = "policy";

/// Shared trunk feeding a linear mean head and a linear value head, with a
/// state-independent learned `log_std`.
#[derive(Clone, Debug)]
pub struct PolicyModel {
    pub graph: ParamGraph,
    trunk: Mlp,
    mean_head: Mlp,
    value_head: Mlp,
    log_std: ParamId,
    obs_dim: usize,
    action_dim: usize,
    hidden: Vec<usize>,
}

/// Nodes produced by one tape forward pass over a batch.
pub struct PolicyNodes {
    pub mean: Var,
    pub value: Var,
    pub log_std: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActionSample {
    /// Pre-clamp action drawn from `Normal(mean, exp(log_std)²)`.
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
}

impl PolicyModel {
    pub fn new(obs_dim: usize, action_dim: usize, hidden: &[usize], init_log_std: f64, rng: &mut Rng) -> Result<Self> {
        let mut graph = ParamGraph::new();
        let trunk_spec = trunk_spec(obs_dim, hidden)?;
        let width = trunk_spec.output_width();
        let trunk = Mlp::new(&mut graph, "trunk", trunk_spec, 1.0, rng)?;
        let mean_head = Mlp::new(&mut graph, "mean", head_spec(width, action_dim), 0.01, rng)?;
        let value_head = Mlp::new(&mut graph, "value", head_spec(width, 1), 1.0, rng)?;
        let log_std = graph.add("log_std", Matrix::filled(1, action_dim, init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX)))?;
        Ok(Self {
            graph,
            trunk,
            mean_head,
            value_head,
            log_std,
            obs_dim,
            action_dim,
            hidden: hidden.to_vec(),
        })
    }

    fn bind(graph: ParamGraph, obs_dim: usize, action_dim: usize, hidden: &[usize]) -> Result<Self> {
        let trunk_spec = trunk_spec(obs_dim, hidden)?;
        let width = trunk_spec.output_width();
        let trunk = Mlp::bind(&graph, "trunk", trunk_spec)?;
        let mean_head = Mlp::bind(&graph, "mean", head_spec(width, action_dim))?;
        let value_head = Mlp::bind(&graph, "value", head_spec(width, 1))?;
        let log_std = graph.expect("log_std", 1, action_dim)?;
        Ok(Self {
            graph,
            trunk,
            mean_head,
            value_head,
            log_std,
            obs_dim,
            action_dim,
            hidden: hidden.to_vec(),
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn log_std(&self) -> &[f64] {
        self.graph.value(self.log_std).data()
    }

    pub fn log_std_id(&self) -> ParamId {
        self.log_std
    }

    pub fn clamp_log_std(&mut self) {
        for x in self.graph.value_mut(self.log_std).data_mut() {
            *x = x.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    /// Closed-form entropy `Σ (log_std + ½·ln(2πe))`.
    pub fn entropy(&self) -> f64 {
        self.log_std().iter().map(|s| s + 0.5 * (2.0 * PI * E).ln()).sum()
    }

    /// Mean actions and values for a batch of observations (no tape).
    pub fn infer(&self, obs: &Matrix) -> Result<(Matrix, Matrix)> {
        let h = self.trunk.infer(&self.graph, obs)?;
        Ok((self.mean_head.infer(&self.graph, &h)?, self.value_head.infer(&self.graph, &h)?))
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        let (_, v) = self.infer(&Matrix::row_vector(obs.to_vec()))?;
        Ok(v.item())
    }

    pub fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let (m, _) = self.infer(&Matrix::row_vector(obs.to_vec()))?;
        Ok(m.into_vec())
    }

    /// Samples a pre-clamp action and reports its log-density and the value.
    pub fn act(&self, obs: &[f64], rng: &mut Rng) -> Result<ActionSample> {
        let (mean, value) = self.infer(&Matrix::row_vector(obs.to_vec()))?;
        let log_std = self.log_std();
        let action: Vec<f64> = mean
            .data()
            .iter()
            .zip(log_std)
            .map(|(&m, &s)| m + s.exp() * rng.standard_normal())
            .collect();
        let log_prob = gaussian_log_prob(&action, mean.data(), log_std);
        Ok(ActionSample {
            action,
            log_prob,
            value: value.item(),
        })
    }

    /// Tape forward pass for `obs` (`batch x obs_dim`).
    pub fn forward(&self, tape: &mut Tape, obs: Var) -> Result<PolicyNodes> {
        let h = self.trunk.forward(tape, &self.graph, obs)?;
        let mean = self.mean_head.forward(tape, &self.graph, h)?;
        let value = self.value_head.forward(tape, &self.graph, h)?;
        let log_std = tape.param(&self.graph, self.log_std);
        Ok(PolicyNodes { mean, value, log_std })
    }

    /// Per-row Gaussian log-density of `actions` under the recorded nodes.
    pub fn log_prob_on_tape(&self, tape: &mut Tape, nodes: &PolicyNodes, actions: Matrix) -> Result<Var> {
        let n = actions.rows();
        let a = tape.input(actions);
        let diff = tape.sub(a, nodes.mean)?;
        let neg = tape.scale(nodes.log_std, -1.0);
        let inv_std = tape.exp(neg);
        let inv_rows = tape.repeat_rows(inv_std, n)?;
        let z = tape.mul(diff, inv_rows)?;
        let z2 = tape.square(z);
        let quad = tape.row_sums(z2);
        let quad = tape.scale(quad, -0.5);
        let log_det = tape.sum(nodes.log_std);
        let log_det = tape.repeat_rows(log_det, n)?;
        let lp = tape.sub(quad, log_det)?;
        Ok(tape.add_scalar(lp, -0.5 * self.action_dim as f64 * (2.0 * PI).ln()))
    }

    pub fn snapshot(&self, ctx: &AgentContext) -> CheckpointBlob {
        let widths: Vec<String> = self.hidden.iter().map(usize::to_string).collect();
        CheckpointBlob::new(SECTION, self.graph.clone())
            .with_meta("obs_dim", self.obs_dim)
            .with_meta("action_dim", self.action_dim)
            .with_meta("hidden", widths.join(","))
            .with_meta("age_timesteps", ctx.age_timesteps)
            .with_meta("snapshot_id", ctx.snapshot_id)
    }

    pub fn from_snapshot(blob: &CheckpointBlob) -> Result<(Self, AgentContext)> {
        blob.expect_section(SECTION)?;
        let hidden = blob
            .meta("hidden")?
            .split(',')
            .map(|w| w.parse::<usize>().map_err(|_| Error::Config(format!("bad hidden width `{w}`"))))
            .collect::<Result<Vec<_>>>()?;
        let model = Self::bind(
            blob.params.clone(),
            blob.meta_parse("obs_dim")?,
            blob.meta_parse("action_dim")?,
            &hidden,
        )?;
        let ctx = AgentContext {
            age_timesteps: blob.meta_parse("age_timesteps")?,
            snapshot_id: blob.meta_parse("snapshot_id")?,
        };
        Ok((model, ctx))
    }

    pub fn save(&self, ctx: &AgentContext, path: &Path) -> Result<()> {
        self.snapshot(ctx).save(path)
    }

    pub fn load(path: &Path) -> Result<(Self, AgentContext)> {
        Self::from_snapshot(&CheckpointBlob::load(path)?)
    }
}

fn trunk_spec(obs_dim: usize, hidden: &[usize]) -> Result<LayerSpec> {
    let (&last, rest) = hidden
        .split_last()
        .ok_or_else(|| Error::InvalidArgument("policy trunk needs at least one hidden layer".into()))?;
    Ok(LayerSpec::new(obs_dim, rest, last, Activation::Tanh, Activation::Tanh))
}

fn head_spec(width: usize, out: usize) -> LayerSpec {
    LayerSpec::new(width, &[], out, Activation::Identity, Activation::Identity)
}

/// Diagonal-Gaussian log-density.
pub fn gaussian_log_prob(action: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    let mut lp = -0.5 * action.len() as f64 * (2.0 * PI).ln();
    for ((&a, &m), &s) in action.iter().zip(mean).zip(log_std) {
        let z = (a - m) * (-s).exp();
        lp += -0.5 * z * z - s;
    }
    lp
}
