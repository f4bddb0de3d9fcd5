//! Reverse-mode automatic differentiation over matrices.
//!
//! A [`Tape`] is built fresh for every forward pass. Each operation appends a
//! node holding its value; [`Tape::backward`] walks the nodes in reverse and
//! accumulates gradients into the [`ParamGraph`] the parameters came from.
//! No operation broadcasts implicitly: row-wise bias addition and row
//! repetition are explicit ops.

use std::collections::HashMap;

use super::matrix::Matrix;
use super::params::{ParamGraph, ParamId};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    AddRowBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Minimum(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MulConst(Var, Matrix),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    RepeatRows(Var),
    SumAll(Var),
    RowSums(Var),
    BceWithLogits(Var, Matrix),
}

struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    bound: HashMap<ParamId, Var>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Input)
    }

    /// Binds a parameter. Repeated binds of the same id return the same node,
    /// so weights shared across time steps accumulate one gradient.
    pub fn param(&mut self, graph: &ParamGraph, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let v = self.push(graph.value(id).clone(), Op::Param(id));
        self.bound.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// Adds the `1 x m` row `bias` to every row of `a`.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ar, ac) = self.shape(a);
        if self.shape(bias) != (1, ac) {
            return Err(Error::shape(
                "add_row_bias",
                format!("{ar}x{ac} + {:?}", self.shape(bias)),
            ));
        }
        let mut value = self.value(a).clone();
        let b = self.value(bias).data().to_vec();
        for r in 0..ar {
            for (x, y) in value.row_mut(r).iter_mut().zip(&b) {
                *x += y;
            }
        }
        Ok(self.push(value, Op::AddRowBias(a, bias)))
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        self.value(a).same_shape(self.value(b), name)?;
        let value = self.value(a).zip_map(self.value(b), f);
        Ok(self.push(value, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise minimum; ties send the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "minimum", f64::min, Op::Minimum(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).map(|x| k * x);
        self.push(value, Op::Scale(a, k))
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).map(|x| x + k);
        self.push(value, Op::AddScalar(a))
    }

    /// Elementwise product with a constant (masks, fixed targets).
    pub fn mul_const(&mut self, a: Var, c: Matrix) -> Result<Var> {
        self.value(a).same_shape(&c, "mul_const")?;
        let value = self.value(a).zip_map(&c, |x, y| x * y);
        Ok(self.push(value, Op::MulConst(a, c)))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        self.push(value, Op::Exp(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * x);
        self.push(value, Op::Square(a))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(value, Op::Clamp(a, lo, hi))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = match parts.first() {
            Some(&p) => self.shape(p).0,
            None => return Err(Error::shape("concat_cols", "no inputs")),
        };
        let mut cols = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            if r != rows {
                return Err(Error::shape("concat_cols", format!("{r} rows vs {rows}")));
            }
            cols += c;
        }
        let mut value = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                value.row_mut(r)[offset..offset + src.len()].copy_from_slice(src);
                offset += src.len();
            }
        }
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, cols) = self.shape(a);
        if start >= end || end > cols {
            return Err(Error::shape(
                "slice_cols",
                format!("{start}..{end} of {cols} columns"),
            ));
        }
        let mut value = Matrix::zeros(rows, end - start);
        for r in 0..rows {
            value
                .row_mut(r)
                .copy_from_slice(&self.value(a).row(r)[start..end]);
        }
        Ok(self.push(value, Op::SliceCols(a, start)))
    }

    /// Repeats a `1 x m` row `n` times.
    pub fn repeat_rows(&mut self, a: Var, n: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if r != 1 {
            return Err(Error::shape("repeat_rows", format!("{r}x{c} is not a row")));
        }
        let row = self.value(a).data().to_vec();
        let data = (0..n).flat_map(|_| row.iter().copied()).collect();
        let value = Matrix::from_vec(n, c, data)?;
        Ok(self.push(value, Op::RepeatRows(a)))
    }

    /// Sum of all entries, as a 1x1 node.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        self.push(value, Op::SumAll(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1);
        let s = self.sum(a);
        self.scale(s, 1.0 / n as f64)
    }

    /// Per-row sums, `n x 1`.
    pub fn row_sums(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let data = (0..m.rows()).map(|r| m.row(r).iter().sum()).collect();
        let value = Matrix::from_vec(m.rows(), 1, data).expect("row sums");
        self.push(value, Op::RowSums(a))
    }

    /// Mean binary cross-entropy between `sigmoid(logits)` and `targets`,
    /// evaluated in the numerically stable logit form.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Matrix) -> Result<Var> {
        self.value(logits).same_shape(&targets, "bce_with_logits")?;
        let z = self.value(logits);
        let n = z.len().max(1) as f64;
        let total: f64 = z
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&z, &c)| z.max(0.0) - z * c + (-z.abs()).exp().ln_1p())
            .sum();
        Ok(self.push(Matrix::scalar(total / n), Op::BceWithLogits(logits, targets)))
    }

    /// Backpropagates from the scalar node `loss`, adding parameter
    /// gradients into `graph`. Existing accumulators are not cleared.
    pub fn backward(&self, loss: Var, graph: &mut ParamGraph) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::shape("backward", "loss must be 1x1"));
        }
        let mut grads: Vec<Option<Matrix>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    graph.value(*id).same_shape(&g, graph.name(*id))?;
                    graph.grad_mut(*id).add_assign(&g);
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_nt(self.value(*b))?;
                    let gb = self.value(*a).matmul_tn(&g)?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRowBias(a, bias) => {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (s, x) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *s += x;
                        }
                    }
                    accumulate(&mut grads, *bias, gb);
                    accumulate(&mut grads, *a, g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.map(|x| -x));
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |x, y| x * y);
                    let gb = g.zip_map(self.value(*a), |x, y| x * y);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Minimum(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let mut ga = g.clone();
                    let mut gb = g;
                    for i in 0..va.len() {
                        if va.data()[i] <= vb.data()[i] {
                            gb.data_mut()[i] = 0.0;
                        } else {
                            ga.data_mut()[i] = 0.0;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, k) => accumulate(&mut grads, *a, g.map(|x| k * x)),
                Op::AddScalar(a) => accumulate(&mut grads, *a, g),
                Op::MulConst(a, c) => accumulate(&mut grads, *a, g.zip_map(c, |x, y| x * y)),
                Op::Tanh(a) => {
                    let ga = g.zip_map(&node.value, |x, t| x * (1.0 - t * t));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let ga = g.zip_map(&node.value, |x, s| x * s * (1.0 - s));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    let ga = g.zip_map(&node.value, |x, e| x * e);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Square(a) => {
                    let ga = g.zip_map(self.value(*a), |x, v| 2.0 * x * v);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Clamp(a, lo, hi) => {
                    let ga = g.zip_map(self.value(*a), |x, v| {
                        if v < *lo || v > *hi {
                            0.0
                        } else {
                            x
                        }
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (rows, cols) = self.shape(p);
                        let mut gp = Matrix::zeros(rows, cols);
                        for r in 0..rows {
                            gp.row_mut(r)
                                .copy_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        offset += cols;
                        accumulate(&mut grads, p, gp);
                    }
                }
                Op::SliceCols(a, start) => {
                    let (rows, cols) = self.shape(*a);
                    let mut ga = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        ga.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::RepeatRows(a) => {
                    let mut ga = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (s, x) in ga.data_mut().iter_mut().zip(g.row(r)) {
                            *s += x;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SumAll(a) => {
                    let (rows, cols) = self.shape(*a);
                    accumulate(&mut grads, *a, Matrix::filled(rows, cols, g.item()));
                }
                Op::RowSums(a) => {
                    let (rows, cols) = self.shape(*a);
                    let mut ga = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        ga.row_mut(r).fill(g.get(r, 0));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::BceWithLogits(z, targets) => {
                    let zv = self.value(*z);
                    let n = zv.len().max(1) as f64;
                    let scale = g.item() / n;
                    let ga = zv.zip_map(targets, |z, c| scale * (sigmoid(z) - c));
                    accumulate(&mut grads, *z, ga);
                }
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Logistic function, stable for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(graph: &mut ParamGraph, f: impl Fn(&ParamGraph) -> (Tape, Var)) {
        graph.zero_grad();
        let (tape, loss) = f(graph);
        tape.backward(loss, graph).unwrap();
        let analytic = graph.flat_grads();
        let eps = 1e-5;
        for k in 0..graph.num_scalars() {
            let orig = *graph.scalar_mut(k);
            *graph.scalar_mut(k) = orig + eps;
            let (t, l) = f(graph);
            let up = t.value(l).item();
            *graph.scalar_mut(k) = orig - eps;
            let (t, l) = f(graph);
            let down = t.value(l).item();
            *graph.scalar_mut(k) = orig;
            let fd = (up - down) / (2.0 * eps);
            let err = (analytic[k] - fd).abs() / fd.abs().max(1.0);
            assert!(err < 1e-6, "param {k}: analytic {} fd {fd}", analytic[k]);
        }
    }

    #[test]
    fn elementwise_ops_gradcheck() {
        let mut g = ParamGraph::new();
        let a = g
            .add("a", Matrix::from_vec(2, 3, vec![0.3, -0.2, 0.5, 1.1, -0.7, 0.05]).unwrap())
            .unwrap();
        let b = g
            .add("b", Matrix::from_vec(1, 3, vec![0.1, 0.4, -0.3]).unwrap())
            .unwrap();
        fd_check(&mut g, |graph| {
            let mut t = Tape::new();
            let va = t.param(graph, a);
            let vb = t.param(graph, b);
            let rb = t.repeat_rows(vb, 2).unwrap();
            let s = t.add_row_bias(va, vb).unwrap();
            let th = t.tanh(s);
            let sg = t.sigmoid(rb);
            let m = t.mul(th, sg).unwrap();
            let e = t.exp(m);
            let mn = t.minimum(e, rb).unwrap();
            let cl = t.clamp(mn, -0.2, 1.05);
            let sq = t.square(cl);
            let cat = t.concat_cols(&[sq, va]).unwrap();
            let sl = t.slice_cols(cat, 1, 5).unwrap();
            let rs = t.row_sums(sl);
            let z = t.slice_cols(va, 0, 1).unwrap();
            let bce = t
                .bce_with_logits(z, Matrix::from_vec(2, 1, vec![1.0, 0.0]).unwrap())
                .unwrap();
            let sum = t.sum(rs);
            let tot = t.add(sum, bce).unwrap();
            (t, tot)
        });
    }

    #[test]
    fn shared_param_accumulates() {
        let mut g = ParamGraph::new();
        let w = g.add("w", Matrix::scalar(3.0)).unwrap();
        let mut t = Tape::new();
        let a = t.param(&g, w);
        let b = t.param(&g, w);
        assert_eq!(a, b);
        let p = t.mul(a, b).unwrap();
        t.backward(p, &mut g).unwrap();
        assert_eq!(g.grad(w).item(), 6.0);
    }

    #[test]
    fn no_silent_broadcast() {
        let mut t = Tape::new();
        let a = t.input(Matrix::zeros(2, 3));
        let b = t.input(Matrix::zeros(1, 3));
        assert!(t.add(a, b).is_err());
        assert!(t.add_row_bias(a, a).is_err());
    }

    #[test]
    fn bce_is_stable_for_saturated_logits() {
        let mut t = Tape::new();
        let z = t.input(Matrix::from_vec(2, 1, vec![800.0, -800.0]).unwrap());
        let l = t
            .bce_with_logits(z, Matrix::from_vec(2, 1, vec![1.0, 0.0]).unwrap())
            .unwrap();
        assert_eq!(t.value(l).item(), 0.0);
    }
}
