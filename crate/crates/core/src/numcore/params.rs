//! Named trainable parameters and their gradient accumulators.

use std::collections::HashMap;

use super::matrix::Matrix;
use super::rng::Rng;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Ordered collection of named parameters. Insertion order is the
/// serialization order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamGraph {
    names: Vec<String>,
    values: Vec<Matrix>,
    grads: Vec<Matrix>,
    index: HashMap<String, usize>,
}

impl ParamGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter `{name}`")));
        }
        let id = self.values.len();
        self.index.insert(name.clone(), id);
        self.grads.push(Matrix::zeros(value.rows(), value.cols()));
        self.values.push(value);
        self.names.push(name);
        Ok(ParamId(id))
    }

    /// Glorot-uniform initialized `rows x cols` parameter, scaled by `gain`.
    pub fn add_glorot(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        gain: f64,
        rng: &mut Rng,
    ) -> Result<ParamId> {
        let limit = gain * (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.uniform(-limit, limit)).collect();
        self.add(name, Matrix::from_vec(rows, cols, data)?)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    /// Looks up `name` and checks its shape.
    pub fn expect(&self, name: &str, rows: usize, cols: usize) -> Result<ParamId> {
        let id = self
            .id(name)
            .ok_or_else(|| Error::shape(name, "parameter missing"))?;
        let shape = self.values[id.0].shape();
        if shape != (rows, cols) {
            return Err(Error::shape(
                name,
                format!("expected {rows}x{cols}, found {}x{}", shape.0, shape.1),
            ));
        }
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Matrix {
        &self.grads[id.0]
    }

    pub(crate) fn grad_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.grads[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.data())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales all gradients so their global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm.is_finite() {
            let scale = max_norm / (norm + 1e-12);
            for g in &mut self.grads {
                g.data_mut().iter_mut().for_each(|x| *x *= scale);
            }
        }
        norm
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    /// All parameter entries in order, for finite-difference checks.
    pub fn flat_values(&self) -> Vec<f64> {
        self.values.iter().flat_map(|m| m.data().to_vec()).collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.grads.iter().flat_map(|m| m.data().to_vec()).collect()
    }

    /// Mutable access to the `k`-th scalar in `flat_values` order.
    pub fn scalar_mut(&mut self, mut k: usize) -> &mut f64 {
        for v in &mut self.values {
            if k < v.len() {
                return &mut v.data_mut()[k];
            }
            k -= v.len();
        }
        panic!("scalar index out of range");
    }

    /// Parameter-wise equality of values (names, shapes, bits).
    pub fn same_values(&self, other: &ParamGraph) -> bool {
        self.names == other.names
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| {
                    a.shape() == b.shape()
                        && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits())
                })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_resets_exactly() {
        let mut g = ParamGraph::new();
        let id = g.add("w", Matrix::zeros(2, 2)).unwrap();
        g.grad_mut(id).fill(3.5);
        g.zero_grad();
        assert!(g.grad(id).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn duplicate_and_shape_checks() {
        let mut g = ParamGraph::new();
        g.add("w", Matrix::zeros(2, 3)).unwrap();
        assert!(g.add("w", Matrix::zeros(1, 1)).is_err());
        assert!(g.expect("w", 2, 3).is_ok());
        let err = g.expect("w", 3, 2).unwrap_err().to_string();
        assert!(err.contains("w"), "{err}");
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = ParamGraph::new();
        let id = g.add("w", Matrix::zeros(1, 2)).unwrap();
        g.grad_mut(id).data_mut().copy_from_slice(&[3.0, 4.0]);
        assert_eq!(g.clip_grad_norm(1.0), 5.0);
        assert!((g.grad_norm() - 1.0).abs() < 1e-9);
    }
}
