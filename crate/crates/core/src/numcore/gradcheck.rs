//! Central finite-difference gradient checking.
//!
//! The checker only evaluates the scalar loss; it never looks at the tape's
//! backward pass except to read the analytic gradient it compares against.

use super::params::ParamGraph;
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct GradCheck {
    /// Largest `|analytic - fd| / max(1, |fd|)` over all parameter entries.
    pub max_rel_err: f64,
    /// Flat index and parameter name of the worst entry.
    pub worst: (usize, String),
    pub checked: usize,
}

/// Compares the gradient produced by `backward` with central differences of
/// `loss` at step `eps`.
///
/// `backward` must leave the analytic gradient in `graph` (it is called after
/// `zero_grad`); `loss` must evaluate the same scalar objective.
pub fn check(
    graph: &mut ParamGraph,
    eps: f64,
    mut backward: impl FnMut(&mut ParamGraph) -> Result<()>,
    mut loss: impl FnMut(&ParamGraph) -> Result<f64>,
) -> Result<GradCheck> {
    graph.zero_grad();
    backward(graph)?;
    let analytic = graph.flat_grads();
    let names: Vec<(String, usize)> = graph.iter().map(|(n, m)| (n.to_string(), m.len())).collect();
    let mut worst = (0usize, String::new());
    let mut max_rel_err = 0.0f64;
    let mut k = 0;
    for (name, len) in &names {
        for _ in 0..*len {
            let orig = *graph.scalar_mut(k);
            *graph.scalar_mut(k) = orig + eps;
            let up = loss(graph)?;
            *graph.scalar_mut(k) = orig - eps;
            let down = loss(graph)?;
            *graph.scalar_mut(k) = orig;
            let fd = (up - down) / (2.0 * eps);
            let rel = (analytic[k] - fd).abs() / fd.abs().max(1.0);
            if rel > max_rel_err || !rel.is_finite() {
                max_rel_err = if rel.is_finite() { rel } else { f64::INFINITY };
                worst = (k, name.clone());
            }
            k += 1;
        }
    }
    Ok(GradCheck {
        max_rel_err,
        worst,
        checked: k,
    })
}
