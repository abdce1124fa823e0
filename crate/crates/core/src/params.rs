//! Named parameter sets and their initialization.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

/// Declared name, shape and role of one model parameter.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
}

impl ParamSpec {
    pub fn weight(name: impl Into<String>, shape: &[usize]) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            kind: ParamKind::Weight,
        }
    }

    pub fn bias(name: impl Into<String>, len: usize) -> Self {
        Self {
            name: name.into(),
            shape: vec![len],
            kind: ParamKind::Bias,
        }
    }
}

/// Parameter tensors keyed by name, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Draws every weight i.i.d. from `N(0, std²)` in spec order; biases are zero.
    pub fn init<R: Rng + ?Sized>(specs: &[ParamSpec], std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("finite std");
        let mut set = Self::new();
        for spec in specs {
            let n: usize = spec.shape.iter().product();
            let data = match spec.kind {
                ParamKind::Weight => (0..n).map(|_| normal.sample(rng)).collect(),
                ParamKind::Bias => vec![0.0; n],
            };
            set.insert(&spec.name, Tensor::new(spec.shape.clone(), data).expect("spec shape"));
        }
        set
    }

    pub fn insert(&mut self, name: &str, t: Tensor) -> Option<Tensor> {
        self.tensors.insert(name.to_string(), t)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::ParamMismatch(format!("missing parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn num_elements(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Registers `name` on the graph (idempotent) and returns its node.
    pub fn node(&self, g: &mut Graph, name: &str) -> Result<NodeId> {
        Ok(g.param(name, self.get(name)?))
    }

    /// Verifies this set has exactly the declared names and shapes.
    pub fn check_against(&self, specs: &[ParamSpec]) -> Result<()> {
        let mut missing = Vec::new();
        let mut wrong_shape = Vec::new();
        for s in specs {
            match self.tensors.get(&s.name) {
                None => missing.push(s.name.clone()),
                Some(t) if t.shape() != s.shape.as_slice() => wrong_shape.push(format!(
                    "{} (have {:?}, want {:?})",
                    s.name,
                    t.shape(),
                    s.shape
                )),
                Some(_) => {}
            }
        }
        let extra: Vec<_> = self
            .tensors
            .keys()
            .filter(|k| !specs.iter().any(|s| &s.name == *k))
            .cloned()
            .collect();
        if missing.is_empty() && extra.is_empty() && wrong_shape.is_empty() {
            return Ok(());
        }
        let mut parts = Vec::new();
        if !missing.is_empty() {
            parts.push(format!("missing: {}", missing.join(", ")));
        }
        if !extra.is_empty() {
            parts.push(format!("extra: {}", extra.join(", ")));
        }
        if !wrong_shape.is_empty() {
            parts.push(format!("shape mismatch: {}", wrong_shape.join(", ")));
        }
        Err(Error::ParamMismatch(parts.join("; ")))
    }
}

/// Outcome of seeding a fresh parameter set from an earlier checkpoint.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TransferReport {
    pub carried: Vec<String>,
    pub fresh: Vec<String>,
    pub ignored: Vec<String>,
}

/// Copies every parameter of `source` whose name also exists in `target`.
///
/// Shared names must agree on shape; parameters only in `target` keep their
/// fresh initialization and parameters only in `source` are dropped.
pub fn transfer(target: &mut ParamSet, source: &ParamSet) -> Result<TransferReport> {
    let mismatched: Vec<String> = source
        .iter()
        .filter_map(|(name, t)| match target.tensors.get(name) {
            Some(dst) if dst.shape() != t.shape() => Some(format!(
                "{name} (checkpoint {:?}, model {:?})",
                t.shape(),
                dst.shape()
            )),
            _ => None,
        })
        .collect();
    if !mismatched.is_empty() {
        return Err(Error::ParamMismatch(format!(
            "cannot fine-tune, shape mismatch: {}",
            mismatched.join(", ")
        )));
    }
    let mut report = TransferReport::default();
    for (name, dst) in target.tensors.iter_mut() {
        match source.tensors.get(name) {
            Some(src) => {
                *dst = src.clone();
                report.carried.push(name.clone());
            }
            None => report.fresh.push(name.clone()),
        }
    }
    report.ignored = source
        .names()
        .filter(|n| !target.contains(n))
        .map(str::to_string)
        .collect();
    Ok(report)
}
