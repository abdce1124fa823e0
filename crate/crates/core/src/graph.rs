//! Tape-style computation graph with reverse-mode differentiation.
//!
//! Every operation evaluates eagerly and appends a node, so node order is a
//! valid topological order by construction. Parameters are named leaves;
//! registering the same name twice returns the existing node, which is how
//! recurrent weights are shared across time steps.
//!
//! The recorded graph can be *replayed*: after a leaf value is changed,
//! [`Graph::recompute_from`] re-evaluates every downstream node with the same
//! control flow. The finite-difference oracle in [`crate::gradcheck`] is built
//! on that.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node inside one [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRowBias(NodeId, NodeId),
    /// `scale * x + shift`, elementwise.
    Affine(NodeId, f64, f64),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    Expm1(NodeId),
    Square(NodeId),
    Clamp(NodeId, f64, f64),
    Softmax(NodeId),
    LogSoftmax(NodeId),
    Sum(NodeId),
    MeanRows(NodeId),
    Concat(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    Slice(NodeId, usize, usize),
    Row(NodeId, usize),
    Column(NodeId, usize),
    Pick(NodeId, usize),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Gradients of a scalar loss keyed by parameter name.
pub type GradientMap = BTreeMap<String, Tensor>;

#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: BTreeMap<String, NodeId>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// Registered parameters in name order.
    pub fn params(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.params.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn param_node(&self, name: &str) -> Option<NodeId> {
        self.params.get(name).copied()
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        matches!(self.nodes[id.0].op, Op::Leaf)
    }

    /// Adds an unnamed leaf that never appears in a [`GradientMap`].
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value)
    }

    /// Returns the node for parameter `name`, registering `value` on first use.
    /// Later calls return the same node and ignore `value`.
    pub fn param(&mut self, name: &str, value: &Tensor) -> NodeId {
        if let Some(&id) = self.params.get(name) {
            return id;
        }
        let id = self.push(Op::Leaf, value.clone());
        self.params.insert(name.to_string(), id);
        id
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    fn apply(&mut self, op: Op) -> Result<NodeId> {
        let value = self.eval(&op)?;
        Ok(self.push(op, value))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Transpose(a))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Mul(a, b))
    }

    /// Adds a bias vector to every row of a matrix.
    pub fn add_row_bias(&mut self, m: NodeId, bias: NodeId) -> Result<NodeId> {
        self.apply(Op::AddRowBias(m, bias))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        self.apply(Op::Affine(a, factor, 0.0))
    }

    pub fn add_scalar(&mut self, a: NodeId, shift: f64) -> Result<NodeId> {
        self.apply(Op::Affine(a, 1.0, shift))
    }

    pub fn neg(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Affine(a, -1.0, 0.0))
    }

    /// `1 - x`, elementwise.
    pub fn one_minus(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Affine(a, -1.0, 1.0))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Exp(a))
    }

    /// `exp(x) - 1`, accurate near zero.
    pub fn expm1(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Expm1(a))
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Square(a))
    }

    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        if lo > hi {
            return Err(Error::Contract(format!("clamp bounds {lo} > {hi}")));
        }
        self.apply(Op::Clamp(a, lo, hi))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Softmax(a))
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::LogSoftmax(a))
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Sum(a))
    }

    /// Arithmetic mean over the rows of a matrix.
    pub fn mean_rows(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::MeanRows(a))
    }

    /// Concatenates vectors end to end.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.apply(Op::Concat(parts.to_vec()))
    }

    /// Stacks vectors (as single rows) and matrices with a common width.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.apply(Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.apply(Op::Slice(a, start, len))
    }

    pub fn row(&mut self, a: NodeId, i: usize) -> Result<NodeId> {
        self.apply(Op::Row(a, i))
    }

    pub fn column(&mut self, a: NodeId, j: usize) -> Result<NodeId> {
        self.apply(Op::Column(a, j))
    }

    /// Selects one element of a vector as a scalar.
    pub fn pick(&mut self, a: NodeId, i: usize) -> Result<NodeId> {
        self.apply(Op::Pick(a, i))
    }

    /// `W x + b`.
    pub fn affine(&mut self, w: NodeId, x: NodeId, b: NodeId) -> Result<NodeId> {
        let wx = self.matmul(w, x)?;
        self.add(wx, b)
    }

    /// Sums a list of same-shaped nodes left to right.
    pub fn add_all(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let (&first, rest) = parts
            .split_first()
            .ok_or_else(|| Error::Contract("add_all of an empty list".into()))?;
        rest.iter().try_fold(first, |acc, &p| self.add(acc, p))
    }

    fn v(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn eval(&self, op: &Op) -> Result<Tensor> {
        Ok(match op {
            Op::Leaf => unreachable!("leaves carry their own value"),
            Op::MatMul(a, b) => matmul(self.v(*a), self.v(*b))?,
            Op::Transpose(a) => {
                let a = self.v(*a);
                if a.rank() != 2 {
                    return Err(Error::dim("transpose", a.shape(), &[]));
                }
                let (m, n) = (a.rows(), a.cols());
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        out[j * m + i] = a.data()[i * n + j];
                    }
                }
                Tensor::new(vec![n, m], out)?
            }
            Op::Add(a, b) => zip(self.v(*a), self.v(*b), "add", |x, y| x + y)?,
            Op::Sub(a, b) => zip(self.v(*a), self.v(*b), "sub", |x, y| x - y)?,
            Op::Mul(a, b) => zip(self.v(*a), self.v(*b), "mul", |x, y| x * y)?,
            Op::AddRowBias(m, b) => {
                let (m, b) = (self.v(*m), self.v(*b));
                if m.rank() != 2 || b.rank() != 1 || m.cols() != b.len() {
                    return Err(Error::dim("add_row_bias", m.shape(), b.shape()));
                }
                let c = m.cols();
                let data = m
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(k, &x)| x + b.data()[k % c])
                    .collect();
                Tensor::new(m.shape().to_vec(), data)?
            }
            Op::Affine(a, s, t) => self.v(*a).map(|x| s * x + t),
            Op::Tanh(a) => self.v(*a).map(f64::tanh),
            Op::Sigmoid(a) => self.v(*a).map(sigmoid),
            Op::Exp(a) => self.v(*a).map(f64::exp),
            Op::Expm1(a) => self.v(*a).map(f64::exp_m1),
            Op::Square(a) => self.v(*a).map(|x| x * x),
            Op::Clamp(a, lo, hi) => self.v(*a).map(|x| x.clamp(*lo, *hi)),
            Op::Softmax(a) => last_axis(self.v(*a), softmax_row),
            Op::LogSoftmax(a) => last_axis(self.v(*a), log_softmax_row),
            Op::Sum(a) => Tensor::scalar(self.v(*a).data().iter().sum()),
            Op::MeanRows(a) => {
                let a = self.v(*a);
                if a.rank() != 2 {
                    return Err(Error::dim("mean_rows", a.shape(), &[]));
                }
                let (t, c) = (a.rows(), a.cols());
                let mut out = vec![0.0; c];
                for i in 0..t {
                    for (o, x) in out.iter_mut().zip(a.row(i)) {
                        *o += x;
                    }
                }
                let inv = 1.0 / t as f64;
                Tensor::vector(out.into_iter().map(|x| x * inv).collect())
            }
            Op::Concat(parts) => {
                if parts.is_empty() {
                    return Err(Error::Contract("concat of no parts".into()));
                }
                let mut out = Vec::new();
                for p in parts {
                    let t = self.v(*p);
                    if t.rank() != 1 {
                        return Err(Error::dim("concat", t.shape(), &[]));
                    }
                    out.extend_from_slice(t.data());
                }
                Tensor::vector(out)
            }
            Op::ConcatRows(parts) => {
                let Some(first) = parts.first() else {
                    return Err(Error::Contract("concat_rows of no parts".into()));
                };
                let width = self.v(*first).cols();
                let mut rows = 0;
                let mut out = Vec::new();
                for p in parts {
                    let t = self.v(*p);
                    if t.rank() > 2 || t.cols() != width {
                        return Err(Error::dim("concat_rows", self.v(*first).shape(), t.shape()));
                    }
                    rows += if t.rank() == 1 { 1 } else { t.rows() };
                    out.extend_from_slice(t.data());
                }
                Tensor::new(vec![rows, width], out)?
            }
            Op::Slice(a, start, len) => {
                let a = self.v(*a);
                if a.rank() != 1 || *len == 0 || start + len > a.len() {
                    return Err(Error::dim("slice", a.shape(), &[*start, *len]));
                }
                Tensor::vector(a.data()[*start..start + len].to_vec())
            }
            Op::Row(a, i) => {
                let a = self.v(*a);
                if a.rank() != 2 || *i >= a.rows() {
                    return Err(Error::dim("row", a.shape(), &[*i]));
                }
                Tensor::vector(a.row(*i).to_vec())
            }
            Op::Column(a, j) => {
                let a = self.v(*a);
                if a.rank() != 2 || *j >= a.cols() {
                    return Err(Error::dim("column", a.shape(), &[*j]));
                }
                Tensor::vector((0..a.rows()).map(|i| a.get2(i, *j)).collect())
            }
            Op::Pick(a, i) => {
                let a = self.v(*a);
                if a.rank() != 1 || *i >= a.len() {
                    return Err(Error::dim("pick", a.shape(), &[*i]));
                }
                Tensor::scalar(a.data()[*i])
            }
        })
    }

    /// Overwrites a leaf value in place. Downstream nodes are stale until
    /// [`Graph::recompute_from`] runs.
    pub fn leaf_value_mut(&mut self, id: NodeId) -> Result<&mut Tensor> {
        if !self.is_leaf(id) {
            return Err(Error::Contract(format!("node {} is not a leaf", id.0)));
        }
        Ok(&mut self.nodes[id.0].value)
    }

    /// Re-evaluates every non-leaf node at index `>= start` in order.
    pub fn recompute_from(&mut self, start: usize) -> Result<()> {
        for i in start..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let value = self.eval(&self.nodes[i].op)?;
            self.nodes[i].value = value;
        }
        Ok(())
    }

    /// Computes the gradient of scalar `loss` with respect to every parameter
    /// it depends on.
    pub fn backward(&self, loss: NodeId) -> Result<GradientMap> {
        let grads = self.backward_all(loss)?;
        Ok(self
            .params
            .iter()
            .filter_map(|(name, id)| {
                grads[id.0].as_ref().map(|g| {
                    let shape = self.nodes[id.0].value.shape().to_vec();
                    (name.clone(), Tensor::new(shape, g.clone()).expect("gradient shape"))
                })
            })
            .collect())
    }

    /// Gradient buffers for every node; `None` for nodes the loss does not
    /// depend on.
    fn backward_all(&self, loss: NodeId) -> Result<Vec<Option<Vec<f64>>>> {
        if self.v(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(grads)
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        let mut acc = |id: NodeId, f: &mut dyn FnMut(&mut [f64])| {
            let n = self.nodes[id.0].value.len();
            let buf = grads[id.0].get_or_insert_with(|| vec![0.0; n]);
            f(buf);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.v(*a), self.v(*b));
                match (ta.rank(), tb.rank()) {
                    (2, 1) => {
                        let (m, k) = (ta.rows(), ta.cols());
                        acc(*a, &mut |da| {
                            for r in 0..m {
                                let gr = g[r];
                                let row = &mut da[r * k..(r + 1) * k];
                                for (d, x) in row.iter_mut().zip(tb.data()) {
                                    *d += gr * x;
                                }
                            }
                        });
                        acc(*b, &mut |db| {
                            for r in 0..m {
                                let gr = g[r];
                                for (d, w) in db.iter_mut().zip(ta.row(r)) {
                                    *d += gr * w;
                                }
                            }
                        });
                    }
                    (2, 2) => {
                        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                        acc(*a, &mut |da| {
                            for r in 0..m {
                                let grow = &g[r * n..(r + 1) * n];
                                for kk in 0..k {
                                    let brow = tb.row(kk);
                                    let s: f64 = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                                    da[r * k + kk] += s;
                                }
                            }
                        });
                        acc(*b, &mut |db| {
                            for r in 0..m {
                                let grow = &g[r * n..(r + 1) * n];
                                for kk in 0..k {
                                    let av = ta.data()[r * k + kk];
                                    for (d, x) in db[kk * n..(kk + 1) * n].iter_mut().zip(grow) {
                                        *d += av * x;
                                    }
                                }
                            }
                        });
                    }
                    (1, 2) => {
                        let (k, n) = (tb.rows(), tb.cols());
                        acc(*a, &mut |da| {
                            for kk in 0..k {
                                let s: f64 = g.iter().zip(tb.row(kk)).map(|(x, y)| x * y).sum();
                                da[kk] += s;
                            }
                        });
                        acc(*b, &mut |db| {
                            for kk in 0..k {
                                let xv = ta.data()[kk];
                                for (d, x) in db[kk * n..(kk + 1) * n].iter_mut().zip(g) {
                                    *d += xv * x;
                                }
                            }
                        });
                    }
                    _ => unreachable!("matmul ranks validated in forward"),
                }
            }
            Op::Transpose(a) => {
                let ta = self.v(*a);
                let (m, n) = (ta.rows(), ta.cols());
                acc(*a, &mut |da| {
                    for r in 0..m {
                        for c in 0..n {
                            da[r * n + c] += g[c * m + r];
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |d| add_into(d, g));
                acc(*b, &mut |d| add_into(d, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |d| add_into(d, g));
                acc(*b, &mut |d| {
                    for (d, x) in d.iter_mut().zip(g) {
                        *d -= x;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.v(*a).data(), self.v(*b).data());
                acc(*a, &mut |d| {
                    for k in 0..d.len() {
                        d[k] += g[k] * tb[k];
                    }
                });
                acc(*b, &mut |d| {
                    for k in 0..d.len() {
                        d[k] += g[k] * ta[k];
                    }
                });
            }
            Op::AddRowBias(m, b) => {
                let c = self.v(*b).len();
                acc(*m, &mut |d| add_into(d, g));
                acc(*b, &mut |d| {
                    for (k, x) in g.iter().enumerate() {
                        d[k % c] += x;
                    }
                });
            }
            Op::Affine(a, s, _) => acc(*a, &mut |d| {
                for (d, x) in d.iter_mut().zip(g) {
                    *d += s * x;
                }
            }),
            Op::Tanh(a) => acc(*a, &mut |d| {
                for k in 0..d.len() {
                    d[k] += g[k] * (1.0 - out[k] * out[k]);
                }
            }),
            Op::Sigmoid(a) => acc(*a, &mut |d| {
                for k in 0..d.len() {
                    d[k] += g[k] * out[k] * (1.0 - out[k]);
                }
            }),
            Op::Exp(a) => acc(*a, &mut |d| {
                for k in 0..d.len() {
                    d[k] += g[k] * out[k];
                }
            }),
            Op::Expm1(a) => acc(*a, &mut |d| {
                for k in 0..d.len() {
                    d[k] += g[k] * (out[k] + 1.0);
                }
            }),
            Op::Square(a) => {
                let x = self.v(*a).data();
                acc(*a, &mut |d| {
                    for k in 0..d.len() {
                        d[k] += 2.0 * x[k] * g[k];
                    }
                });
            }
            Op::Clamp(a, lo, hi) => {
                let x = self.v(*a).data();
                acc(*a, &mut |d| {
                    for k in 0..d.len() {
                        if x[k] >= *lo && x[k] <= *hi {
                            d[k] += g[k];
                        }
                    }
                });
            }
            Op::Softmax(a) => {
                let c = node.value.cols();
                acc(*a, &mut |d| {
                    for (drow, (yrow, grow)) in d.chunks_mut(c).zip(out.chunks(c).zip(g.chunks(c))) {
                        let dotp: f64 = yrow.iter().zip(grow).map(|(y, g)| y * g).sum();
                        for k in 0..c {
                            drow[k] += yrow[k] * (grow[k] - dotp);
                        }
                    }
                });
            }
            Op::LogSoftmax(a) => {
                let c = node.value.cols();
                acc(*a, &mut |d| {
                    for (drow, (lrow, grow)) in d.chunks_mut(c).zip(out.chunks(c).zip(g.chunks(c))) {
                        let gsum: f64 = grow.iter().sum();
                        for k in 0..c {
                            drow[k] += grow[k] - lrow[k].exp() * gsum;
                        }
                    }
                });
            }
            Op::Sum(a) => acc(*a, &mut |d| {
                for x in d.iter_mut() {
                    *x += g[0];
                }
            }),
            Op::MeanRows(a) => {
                let ta = self.v(*a);
                let (t, c) = (ta.rows(), ta.cols());
                let inv = 1.0 / t as f64;
                acc(*a, &mut |d| {
                    for drow in d.chunks_mut(c) {
                        for k in 0..c {
                            drow[k] += g[k] * inv;
                        }
                    }
                });
            }
            Op::Concat(parts) | Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = self.v(*p).len();
                    let gs = &g[off..off + n];
                    acc(*p, &mut |d| add_into(d, gs));
                    off += n;
                }
            }
            Op::Slice(a, start, len) => acc(*a, &mut |d| {
                add_into(&mut d[*start..start + len], g);
            }),
            Op::Row(a, i) => {
                let c = self.v(*a).cols();
                acc(*a, &mut |d| add_into(&mut d[i * c..(i + 1) * c], g));
            }
            Op::Column(a, j) => {
                let c = self.v(*a).cols();
                acc(*a, &mut |d| {
                    for (r, x) in g.iter().enumerate() {
                        d[r * c + j] += x;
                    }
                });
            }
            Op::Pick(a, i) => acc(*a, &mut |d| d[*i] += g[0]),
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn zip(a: &Tensor, b: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::dim(op, a.shape(), b.shape()));
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data)
}

fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    match (a.rank(), b.rank()) {
        (2, 1) if a.cols() == b.len() => {
            let out = (0..a.rows())
                .map(|r| a.row(r).iter().zip(b.data()).map(|(x, y)| x * y).sum())
                .collect();
            Ok(Tensor::vector(out))
        }
        (2, 2) if a.cols() == b.rows() => {
            let (m, k, n) = (a.rows(), a.cols(), b.cols());
            let mut out = vec![0.0; m * n];
            for r in 0..m {
                let orow = &mut out[r * n..(r + 1) * n];
                for kk in 0..k {
                    let av = a.data()[r * k + kk];
                    for (o, x) in orow.iter_mut().zip(b.row(kk)) {
                        *o += av * x;
                    }
                }
            }
            Tensor::new(vec![m, n], out)
        }
        (1, 2) if a.len() == b.rows() => {
            let n = b.cols();
            let mut out = vec![0.0; n];
            for (kk, av) in a.data().iter().enumerate() {
                for (o, x) in out.iter_mut().zip(b.row(kk)) {
                    *o += av * x;
                }
            }
            Ok(Tensor::vector(out))
        }
        _ => Err(Error::dim("matmul", a.shape(), b.shape())),
    }
}

fn last_axis(t: &Tensor, f: fn(&[f64], &mut [f64])) -> Tensor {
    let c = t.cols();
    let mut out = vec![0.0; t.len()];
    for (src, dst) in t.data().chunks(c).zip(out.chunks_mut(c)) {
        f(src, dst);
    }
    Tensor::new(t.shape().to_vec(), out).expect("same shape")
}

fn softmax_row(x: &[f64], out: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

fn log_softmax_row(x: &[f64], out: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    for (o, &v) in out.iter_mut().zip(x) {
        *o = v - lse;
    }
}
