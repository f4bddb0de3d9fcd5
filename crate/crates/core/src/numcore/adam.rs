//! Adam optimizer.

use super::matrix::Matrix;
use super::params::ParamGraph;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(lr: f64, betas: (f64, f64), eps: f64) -> Self {
        Self {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn with_lr(lr: f64) -> Self {
        Self::new(lr, (0.9, 0.999), 1e-8)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Matrix] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Matrix] {
        &self.v
    }

    /// One bias-corrected Adam update from the accumulated gradients.
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, graph: &mut ParamGraph) -> Result<()> {
        for id in graph.ids() {
            if !graph.grad(id).is_finite() {
                return Err(Error::NonFiniteGradient(graph.name(id).to_string()));
            }
        }
        if self.m.len() != graph.len() {
            self.m = graph.ids().map(|id| {
                let (r, c) = graph.value(id).shape();
                Matrix::zeros(r, c)
            }).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (k, id) in graph.ids().enumerate() {
            let grad = graph.grad(id).data().to_vec();
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            let p = graph.value_mut(id).data_mut();
            for j in 0..grad.len() {
                let g = grad[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
