//! Central finite-difference gradient oracle.

use std::fmt;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};

/// Below this analytic magnitude the absolute error is compared instead.
pub const SMALL_GRADIENT: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Largest absolute error among elements judged by the absolute rule.
    pub max_small_abs_error: f64,
    pub worst_index: usize,
    pub elements: usize,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    /// The parameter with the largest relative error.
    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }

    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn max_small_abs_error(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_small_abs_error)
            .fold(0.0, f64::max)
    }

    pub fn passes(&self, rel_tol: f64, abs_tol: f64) -> bool {
        self.max_rel_error() < rel_tol && self.max_small_abs_error() < abs_tol
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.params {
            writeln!(
                f,
                "{:<28} n={:<6} max_rel={:.3e} small_abs={:.3e} (worst elem {})",
                p.name, p.elements, p.max_rel_error, p.max_small_abs_error, p.worst_index
            )?;
        }
        Ok(())
    }
}

/// Compares [`Graph::backward`] against `(L(p+h) - L(p-h)) / 2h` for every
/// element of every parameter the loss depends on.
///
/// Elements whose analytic gradient is below [`SMALL_GRADIENT`] are judged by
/// absolute error only; the rest use `|a - n| / max(|a|, |n|)`. The graph is
/// restored to its original values before returning.
pub fn check_gradient(graph: &mut Graph, loss: NodeId, step: f64) -> Result<GradCheckReport> {
    if !(step > 0.0) {
        return Err(Error::Contract(format!("finite-difference step must be > 0, got {step}")));
    }
    let analytic = graph.backward(loss)?;
    let mut report = GradCheckReport::default();
    for (name, grad) in &analytic {
        let id = graph.param_node(name).expect("gradient for registered param");
        let mut check = ParamCheck {
            name: name.clone(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            max_small_abs_error: 0.0,
            worst_index: 0,
            elements: grad.len(),
        };
        for k in 0..grad.len() {
            let original = graph.value(id).data()[k];
            let plus = eval_at(graph, id, k, original + step, loss)?;
            let minus = eval_at(graph, id, k, original - step, loss)?;
            eval_at(graph, id, k, original, loss)?;
            let numeric = (plus - minus) / (2.0 * step);
            let a = grad.data()[k];
            let abs = (a - numeric).abs();
            check.max_abs_error = check.max_abs_error.max(abs);
            if a.abs() < SMALL_GRADIENT {
                check.max_small_abs_error = check.max_small_abs_error.max(abs);
            } else {
                let rel = abs / a.abs().max(numeric.abs());
                if rel > check.max_rel_error {
                    check.max_rel_error = rel;
                    check.worst_index = k;
                }
            }
        }
        report.params.push(check);
    }
    Ok(report)
}

fn eval_at(graph: &mut Graph, id: NodeId, k: usize, value: f64, loss: NodeId) -> Result<f64> {
    graph.leaf_value_mut(id)?.data_mut()[k] = value;
    graph.recompute_from(id.index() + 1)?;
    Ok(graph.value(loss).item())
}
