//! Dense layers and the LSTM cell, built on the tape.

use super::matrix::Matrix;
use super::params::{ParamGraph, ParamId};
use super::rng::Rng;
use super::tape::{sigmoid, Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply_tape(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Tanh => tape.tanh(x),
            Activation::Sigmoid => tape.sigmoid(x),
        }
    }

    fn apply(self, m: &mut Matrix) {
        match self {
            Activation::Identity => {}
            Activation::Tanh => m.data_mut().iter_mut().for_each(|x| *x = x.tanh()),
            Activation::Sigmoid => m.data_mut().iter_mut().for_each(|x| *x = sigmoid(*x)),
        }
    }
}

/// Layer widths (input first) and one activation per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl LayerSpec {
    /// `hidden` layers with `hidden_act`, then a final layer with `out_act`.
    pub fn new(input: usize, hidden: &[usize], output: usize, hidden_act: Activation, out_act: Activation) -> Self {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        let mut activations = vec![hidden_act; hidden.len()];
        activations.push(out_act);
        Self { widths, activations }
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("non-empty widths")
    }

    fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.activations.len() != self.widths.len() - 1 {
            return Err(Error::InvalidArgument(format!(
                "layer spec needs n+1 widths for n activations, got {} and {}",
                self.widths.len(),
                self.activations.len()
            )));
        }
        if self.widths.contains(&0) {
            return Err(Error::InvalidArgument("zero layer width".into()));
        }
        Ok(())
    }
}

/// Feed-forward network whose weights live in a [`ParamGraph`] under
/// `{prefix}.{layer}.weight` / `{prefix}.{layer}.bias`.
#[derive(Clone, Debug)]
pub struct Mlp {
    prefix: String,
    spec: LayerSpec,
    weights: Vec<ParamId>,
    biases: Vec<ParamId>,
}

impl Mlp {
    /// Registers freshly initialized parameters. The last layer's weights are
    /// scaled by `out_gain`.
    pub fn new(graph: &mut ParamGraph, prefix: &str, spec: LayerSpec, out_gain: f64, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let n = spec.activations.len();
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        for i in 0..n {
            let gain = if i + 1 == n { out_gain } else { 1.0 };
            let (fan_in, fan_out) = (spec.widths[i], spec.widths[i + 1]);
            weights.push(graph.add_glorot(format!("{prefix}.{i}.weight"), fan_in, fan_out, gain, rng)?);
            biases.push(graph.add(format!("{prefix}.{i}.bias"), Matrix::zeros(1, fan_out))?);
        }
        Ok(Self {
            prefix: prefix.to_string(),
            spec,
            weights,
            biases,
        })
    }

    /// Attaches to parameters already present in `graph`, checking shapes.
    pub fn bind(graph: &ParamGraph, prefix: &str, spec: LayerSpec) -> Result<Self> {
        spec.validate()?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for i in 0..spec.activations.len() {
            let (fan_in, fan_out) = (spec.widths[i], spec.widths[i + 1]);
            weights.push(graph.expect(&format!("{prefix}.{i}.weight"), fan_in, fan_out)?);
            biases.push(graph.expect(&format!("{prefix}.{i}.bias"), 1, fan_out)?);
        }
        Ok(Self {
            prefix: prefix.to_string(),
            spec,
            weights,
            biases,
        })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn weight(&self, layer: usize) -> ParamId {
        self.weights[layer]
    }

    pub fn bias(&self, layer: usize) -> ParamId {
        self.biases[layer]
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.spec.input_width() {
            return Err(Error::shape(
                format!("{}.0 (layer 0)", self.prefix),
                format!("input has {cols} columns, layer expects {}", self.spec.input_width()),
            ));
        }
        Ok(())
    }

    /// Forward pass recorded on `tape`; `input` is `batch x input_width`.
    pub fn forward(&self, tape: &mut Tape, graph: &ParamGraph, input: Var) -> Result<Var> {
        self.check_input(tape.shape(input).1)?;
        let mut x = input;
        for (i, act) in self.spec.activations.iter().enumerate() {
            let w = tape.param(graph, self.weights[i]);
            let b = tape.param(graph, self.biases[i]);
            let z = tape.matmul(x, w)?;
            let z = tape.add_row_bias(z, b)?;
            x = act.apply_tape(tape, z);
        }
        Ok(x)
    }

    /// Tape-free forward pass with the same arithmetic as [`Mlp::forward`].
    pub fn infer(&self, graph: &ParamGraph, input: &Matrix) -> Result<Matrix> {
        self.check_input(input.cols())?;
        let mut x = input.clone();
        for (i, act) in self.spec.activations.iter().enumerate() {
            let mut z = x.matmul(graph.value(self.weights[i]))?;
            let b = graph.value(self.biases[i]).data();
            for r in 0..z.rows() {
                for (v, bb) in z.row_mut(r).iter_mut().zip(b) {
                    *v += bb;
                }
            }
            act.apply(&mut z);
            x = z;
        }
        Ok(x)
    }
}

#[derive(Clone, Debug)]
struct LstmLayer {
    wx: ParamId,
    wh: ParamId,
    bias: ParamId,
    hidden: usize,
}

/// Stacked LSTM. Gates are laid out `[input, forget, cell, output]` along the
/// columns of each weight matrix:
///
/// ```text
/// z = x·Wx + h·Wh + b
/// i = σ(z_i)  f = σ(z_f)  g = tanh(z_g)  o = σ(z_o)
/// c' = f⊙c + i⊙g
/// h' = o⊙tanh(c')
/// ```
#[derive(Clone, Debug)]
pub struct Lstm {
    input: usize,
    layers: Vec<LstmLayer>,
}

/// Per-layer `(h, c)` nodes, each `batch x hidden`.
#[derive(Clone, Debug)]
pub struct LstmState {
    pub h: Vec<Var>,
    pub c: Vec<Var>,
}

impl Lstm {
    pub fn new(graph: &mut ParamGraph, prefix: &str, input: usize, widths: &[usize], rng: &mut Rng) -> Result<Self> {
        if widths.is_empty() || widths.contains(&0) || input == 0 {
            return Err(Error::InvalidArgument("LSTM needs positive widths".into()));
        }
        let mut layers = Vec::new();
        let mut fan_in = input;
        for (i, &h) in widths.iter().enumerate() {
            let wx = graph.add_glorot(format!("{prefix}.{i}.wx"), fan_in, 4 * h, 1.0, rng)?;
            let wh = graph.add_glorot(format!("{prefix}.{i}.wh"), h, 4 * h, 1.0, rng)?;
            let mut b = Matrix::zeros(1, 4 * h);
            // forget-gate bias starts at 1
            b.data_mut()[h..2 * h].fill(1.0);
            let bias = graph.add(format!("{prefix}.{i}.bias"), b)?;
            layers.push(LstmLayer { wx, wh, bias, hidden: h });
            fan_in = h;
        }
        Ok(Self { input, layers })
    }

    pub fn bind(graph: &ParamGraph, prefix: &str, input: usize, widths: &[usize]) -> Result<Self> {
        let mut layers = Vec::new();
        let mut fan_in = input;
        for (i, &h) in widths.iter().enumerate() {
            layers.push(LstmLayer {
                wx: graph.expect(&format!("{prefix}.{i}.wx"), fan_in, 4 * h)?,
                wh: graph.expect(&format!("{prefix}.{i}.wh"), h, 4 * h)?,
                bias: graph.expect(&format!("{prefix}.{i}.bias"), 1, 4 * h)?,
                hidden: h,
            });
            fan_in = h;
        }
        Ok(Self { input, layers })
    }

    pub fn input_width(&self) -> usize {
        self.input
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.hidden)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| [l.wx, l.wh, l.bias]).collect()
    }

    /// All-zero initial state for `batch` rows.
    pub fn zero_state(&self, tape: &mut Tape, batch: usize) -> LstmState {
        let mut h = Vec::new();
        let mut c = Vec::new();
        for l in &self.layers {
            h.push(tape.input(Matrix::zeros(batch, l.hidden)));
            c.push(tape.input(Matrix::zeros(batch, l.hidden)));
        }
        LstmState { h, c }
    }

    /// One time step through every layer; returns the top layer's output.
    pub fn step(&self, tape: &mut Tape, graph: &ParamGraph, x: Var, state: &LstmState) -> Result<(Var, LstmState)> {
        let (batch, cols) = tape.shape(x);
        if cols != self.input {
            return Err(Error::shape(
                "lstm step",
                format!("input has {cols} columns, cell expects {}", self.input),
            ));
        }
        let mut next = LstmState {
            h: Vec::with_capacity(self.layers.len()),
            c: Vec::with_capacity(self.layers.len()),
        };
        let mut inp = x;
        for (k, layer) in self.layers.iter().enumerate() {
            let (h_prev, c_prev) = (state.h[k], state.c[k]);
            if tape.shape(h_prev) != (batch, layer.hidden) || tape.shape(c_prev) != (batch, layer.hidden) {
                return Err(Error::shape(
                    format!("lstm layer {k}"),
                    format!("state shape {:?}, expected {batch}x{}", tape.shape(h_prev), layer.hidden),
                ));
            }
            let wx = tape.param(graph, layer.wx);
            let wh = tape.param(graph, layer.wh);
            let b = tape.param(graph, layer.bias);
            let zx = tape.matmul(inp, wx)?;
            let zh = tape.matmul(h_prev, wh)?;
            let z = tape.add(zx, zh)?;
            let z = tape.add_row_bias(z, b)?;
            let h = layer.hidden;
            let zi = tape.slice_cols(z, 0, h)?;
            let zf = tape.slice_cols(z, h, 2 * h)?;
            let zg = tape.slice_cols(z, 2 * h, 3 * h)?;
            let zo = tape.slice_cols(z, 3 * h, 4 * h)?;
            let i = tape.sigmoid(zi);
            let f = tape.sigmoid(zf);
            let g = tape.tanh(zg);
            let o = tape.sigmoid(zo);
            let fc = tape.mul(f, c_prev)?;
            let ig = tape.mul(i, g)?;
            let c = tape.add(fc, ig)?;
            let tc = tape.tanh(c);
            let h_new = tape.mul(o, tc)?;
            next.h.push(h_new);
            next.c.push(c);
            inp = h_new;
        }
        Ok((inp, next))
    }

    /// Runs the whole sequence, returning per-step top-layer outputs.
    pub fn forward(
        &self,
        tape: &mut Tape,
        graph: &ParamGraph,
        sequence: &[Var],
        initial: Option<LstmState>,
    ) -> Result<(Vec<Var>, LstmState)> {
        let first = *sequence
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty input sequence".into()))?;
        let batch = tape.shape(first).0;
        let mut state = match initial {
            Some(s) => s,
            None => self.zero_state(tape, batch),
        };
        let mut outputs = Vec::with_capacity(sequence.len());
        for &x in sequence {
            let (out, next) = self.step(tape, graph, x, &state)?;
            outputs.push(out);
            state = next;
        }
        Ok((outputs, state))
    }
}
