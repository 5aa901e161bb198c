//! Wengert-list reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation appends a node holding its forward value and the handles
//! of its operands. Operands always precede the node that consumes them, so
//! one reverse sweep over the node list visits each node exactly once.

use std::ops::Range;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var },
    Transpose { a: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    AddBias { x: Var, bias: Var },
    Scale { a: Var, factor: f64 },
    Relu { a: Var },
    SoftmaxRows { a: Var },
    Conv1dSame { x: Var, w: Var, b: Var },
    GroupMean { a: Var, groups: Vec<Range<usize>> },
    ConcatRows { parts: Vec<Var> },
    Reshape { a: Var },
    Sum { a: Var },
    SoftmaxCrossEntropy { logits: Var, label: usize, probs: Vec<f64> },
}

impl Op {
    fn operands(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul { a, b } | Op::Add { a, b } | Op::Mul { a, b } => vec![*a, *b],
            Op::AddBias { x, bias } => vec![*x, *bias],
            Op::Conv1dSame { x, w, b } => vec![*x, *w, *b],
            Op::Transpose { a }
            | Op::Scale { a, .. }
            | Op::Relu { a }
            | Op::SoftmaxRows { a }
            | Op::GroupMean { a, .. }
            | Op::Reshape { a }
            | Op::Sum { a } => vec![*a],
            Op::SoftmaxCrossEntropy { logits, .. } => vec![*logits],
            Op::ConcatRows { parts } => parts.clone(),
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Recorded computation. Confined to one thread; independent tapes may run
/// in parallel.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
}

/// Treats rank-1 tensors as a single row.
fn rows_cols(shape: &[usize]) -> Option<(usize, usize)> {
    match *shape {
        [n] => Some((1, n)),
        [r, c] => Some((r, c)),
        _ => None,
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, mut value: Tensor, op: Op) -> Var {
        let requires_grad = op.operands().iter().any(|v| self.nodes[v.0].value.requires_grad());
        debug_assert!(op.operands().iter().all(|v| v.0 < self.nodes.len()));
        value = value.with_requires_grad(requires_grad);
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input. Gradients are tracked iff `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        self.nodes.push(Node {
            value: tensor,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, tensor: Tensor) -> Var {
        self.leaf(tensor.with_requires_grad(true))
    }

    pub fn constant(&mut self, tensor: Tensor) -> Var {
        self.leaf(tensor.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` target with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    /// Every node's operands were recorded before it.
    pub fn is_topologically_ordered(&self) -> bool {
        self.nodes
            .iter()
            .enumerate()
            .all(|(i, n)| n.op.operands().iter().all(|v| v.0 < i))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = ta.dims2()?;
        let (k2, n) = tb.dims2()?;
        if k != k2 {
            return Err(Error::Dimension {
                op: "matmul",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let out = matmul_values(ta.values(), tb.values(), m, k, n);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul { a, b }))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let (m, n) = ta.dims2()?;
        let v = ta.values();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = v[i * n + j];
            }
        }
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::Transpose { a }))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::Dimension {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let out: Vec<f64> = ta.values().iter().zip(tb.values()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(ta.shape().to_vec(), out)?;
        Ok(self.push(t, Op::Add { a, b }))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let out: Vec<f64> = ta.values().iter().zip(tb.values()).map(|(x, y)| x * y).collect();
        let t = Tensor::new(ta.shape().to_vec(), out)?;
        Ok(self.push(t, Op::Mul { a, b }))
    }

    /// Adds a length-`n` bias to every row of an `(m, n)` tensor.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let (_, n) = rows_cols(tx.shape())
            .ok_or_else(|| Error::InvalidArgument(format!("add_bias on shape {:?}", tx.shape())))?;
        if tb.shape() != [n] {
            return Err(Error::Dimension {
                op: "add_bias",
                left: tx.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let b = tb.values();
        let out: Vec<f64> = tx.values().iter().enumerate().map(|(i, v)| v + b[i % n]).collect();
        let t = Tensor::new(tx.shape().to_vec(), out)?;
        Ok(self.push(t, Op::AddBias { x, bias }))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let ta = self.value(a);
        let out = ta.values().iter().map(|v| v * factor).collect();
        let t = Tensor::new(ta.shape().to_vec(), out).unwrap();
        self.push(t, Op::Scale { a, factor })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let out = ta.values().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let t = Tensor::new(ta.shape().to_vec(), out).unwrap();
        self.push(t, Op::Relu { a })
    }

    /// Row-wise softmax; a rank-1 input is one row.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let (m, n) = rows_cols(ta.shape())
            .ok_or_else(|| Error::InvalidArgument(format!("softmax_rows on shape {:?}", ta.shape())))?;
        let mut out = ta.values().to_vec();
        for i in 0..m {
            softmax_in_place(&mut out[i * n..(i + 1) * n]);
        }
        let t = Tensor::new(ta.shape().to_vec(), out)?;
        Ok(self.push(t, Op::SoftmaxRows { a }))
    }

    /// "Same" 1-D cross-correlation over time with zero padding of `(k-1)/2`
    /// on the left and `k-1-(k-1)/2` on the right.
    ///
    /// Shapes: `x` is `(T, c_in)`, `w` is `(k, c_in, c_out)`, `b` is `(c_out)`.
    pub fn conv1d_same(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        let (t_len, c_in) = tx.dims2()?;
        let [k, w_in, c_out] = *tw.shape() else {
            return Err(Error::InvalidArgument(format!(
                "conv kernel must be rank 3, got {:?}",
                tw.shape()
            )));
        };
        if w_in != c_in || tb.shape() != [c_out] {
            return Err(Error::Dimension {
                op: "conv1d_same",
                left: tx.shape().to_vec(),
                right: tw.shape().to_vec(),
            });
        }
        if k > t_len {
            return Err(Error::Window { kernel: k, len: t_len });
        }
        let out = conv1d_values(tx.values(), tw.values(), tb.values(), t_len, c_in, k, c_out);
        Ok(self.push(Tensor::matrix(t_len, c_out, out)?, Op::Conv1dSame { x, w, b }))
    }

    /// Row `g` of the output is the mean of input rows `groups[g]`.
    pub fn group_mean(&mut self, a: Var, groups: Vec<Range<usize>>) -> Result<Var> {
        let ta = self.value(a);
        let (m, n) = ta.dims2()?;
        if groups.is_empty() || groups.iter().any(|g| g.is_empty() || g.end > m) {
            return Err(Error::InvalidArgument(format!(
                "group_mean: invalid groups over {m} rows"
            )));
        }
        let v = ta.values();
        let mut out = vec![0.0; groups.len() * n];
        for (gi, g) in groups.iter().enumerate() {
            let dst = &mut out[gi * n..(gi + 1) * n];
            for r in g.clone() {
                for (d, s) in dst.iter_mut().zip(&v[r * n..(r + 1) * n]) {
                    *d += s;
                }
            }
            let inv = 1.0 / g.len() as f64;
            dst.iter_mut().for_each(|d| *d *= inv);
        }
        let t = Tensor::matrix(groups.len(), n, out)?;
        Ok(self.push(t, Op::GroupMean { a, groups }))
    }

    /// Stacks rows of the parts; rank-1 parts contribute one row each.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let mut width = None;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let tp = self.value(p);
            let (r, c) = rows_cols(tp.shape())
                .ok_or_else(|| Error::InvalidArgument(format!("concat_rows on shape {:?}", tp.shape())))?;
            if *width.get_or_insert(c) != c {
                return Err(Error::Dimension {
                    op: "concat_rows",
                    left: vec![width.unwrap()],
                    right: tp.shape().to_vec(),
                });
            }
            rows += r;
            out.extend_from_slice(tp.values());
        }
        let width = width.ok_or_else(|| Error::InvalidArgument("concat_rows of nothing".into()))?;
        let t = Tensor::matrix(rows, width, out)?;
        Ok(self.push(t, Op::ConcatRows { parts: parts.to_vec() }))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(a).clone().reshape(shape)?;
        Ok(self.push(t, Op::Reshape { a }))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).values().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum { a })
    }

    /// Fused `-ln softmax(logits)[label]`; the backward rule is
    /// `softmax(logits) - onehot(label)`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let tl = self.value(logits);
        let (1, c) = rows_cols(tl.shape()).unwrap_or((0, 0)) else {
            return Err(Error::InvalidArgument(format!(
                "cross entropy expects a single logit row, got {:?}",
                tl.shape()
            )));
        };
        if label >= c {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of range for {c} classes"
            )));
        }
        let z = tl.values();
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let loss = lse - z[label];
        let probs = z.iter().map(|v| (v - lse).exp()).collect();
        Ok(self.push(Tensor::scalar(loss), Op::SoftmaxCrossEntropy { logits, label, probs }))
    }

    /// Reverse sweep from a single-element `target`. Afterwards every node that
    /// requires a gradient holds d(target)/d(node). May be called once per tape.
    pub fn backward(&mut self, target: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::InvalidArgument("backward already run on this tape".into()));
        }
        if self.value(target).len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward target must be a scalar, got shape {:?}",
                self.value(target).shape()
            )));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; target.0 + 1];
        grads[target.0] = Some(vec![1.0]);

        for i in (0..=target.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.value.requires_grad() {
                continue;
            }
            let nodes = &self.nodes;
            let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
                let t = &nodes[v.0].value;
                if t.requires_grad() {
                    let slot = grads[v.0].get_or_insert_with(|| vec![0.0; t.len()]);
                    f(slot);
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul { a, b } => {
                    let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                    let (m, k) = ta.dims2()?;
                    let (_, n) = tb.dims2()?;
                    let (av, bv) = (ta.values(), tb.values());
                    acc(*a, &mut |da| {
                        for i in 0..m {
                            for p in 0..k {
                                let mut s = 0.0;
                                for j in 0..n {
                                    s += g[i * n + j] * bv[p * n + j];
                                }
                                da[i * k + p] += s;
                            }
                        }
                    });
                    acc(*b, &mut |db| {
                        for i in 0..m {
                            for p in 0..k {
                                let aip = av[i * k + p];
                                for j in 0..n {
                                    db[p * n + j] += aip * g[i * n + j];
                                }
                            }
                        }
                    });
                }
                Op::Transpose { a } => {
                    let (m, n) = nodes[a.0].value.dims2()?;
                    acc(*a, &mut |da| {
                        for i in 0..m {
                            for j in 0..n {
                                da[i * n + j] += g[j * m + i];
                            }
                        }
                    });
                }
                Op::Add { a, b } => {
                    acc(*a, &mut |da| add_into(da, &g));
                    acc(*b, &mut |db| add_into(db, &g));
                }
                Op::Mul { a, b } => {
                    let (av, bv) = (nodes[a.0].value.values(), nodes[b.0].value.values());
                    acc(*a, &mut |da| {
                        for ((d, gi), bi) in da.iter_mut().zip(&g).zip(bv) {
                            *d += gi * bi;
                        }
                    });
                    acc(*b, &mut |db| {
                        for ((d, gi), ai) in db.iter_mut().zip(&g).zip(av) {
                            *d += gi * ai;
                        }
                    });
                }
                Op::AddBias { x, bias } => {
                    acc(*x, &mut |dx| add_into(dx, &g));
                    let n = nodes[bias.0].value.len();
                    acc(*bias, &mut |db| {
                        for (i, gi) in g.iter().enumerate() {
                            db[i % n] += gi;
                        }
                    });
                }
                Op::Scale { a, factor } => {
                    acc(*a, &mut |da| {
                        for (d, gi) in da.iter_mut().zip(&g) {
                            *d += gi * factor;
                        }
                    });
                }
                Op::Relu { a } => {
                    let av = nodes[a.0].value.values();
                    acc(*a, &mut |da| {
                        for ((d, gi), x) in da.iter_mut().zip(&g).zip(av) {
                            if *x > 0.0 {
                                *d += gi;
                            }
                        }
                    });
                }
                Op::SoftmaxRows { a } => {
                    let y = node.value.values();
                    let (m, n) = rows_cols(node.value.shape()).unwrap();
                    acc(*a, &mut |da| {
                        for r in 0..m {
                            let row = r * n..(r + 1) * n;
                            let dot: f64 = g[row.clone()].iter().zip(&y[row.clone()]).map(|(a, b)| a * b).sum();
                            for j in row {
                                da[j] += y[j] * (g[j] - dot);
                            }
                        }
                    });
                }
                Op::Conv1dSame { x, w, b } => {
                    let (tx, tw) = (&nodes[x.0].value, &nodes[w.0].value);
                    let (t_len, c_in) = tx.dims2()?;
                    let [k, _, c_out] = *tw.shape() else { unreachable!() };
                    let pad_left = (k - 1) / 2;
                    let (xv, wv) = (tx.values(), tw.values());
                    acc(*x, &mut |dx| {
                        for t in 0..t_len {
                            for j in 0..k {
                                let Some(s) = (t + j).checked_sub(pad_left).filter(|&s| s < t_len) else {
                                    continue;
                                };
                                for c in 0..c_in {
                                    let wrow = &wv[(j * c_in + c) * c_out..(j * c_in + c + 1) * c_out];
                                    let grow = &g[t * c_out..(t + 1) * c_out];
                                    dx[s * c_in + c] += grow.iter().zip(wrow).map(|(a, b)| a * b).sum::<f64>();
                                }
                            }
                        }
                    });
                    acc(*w, &mut |dw| {
                        for t in 0..t_len {
                            for j in 0..k {
                                let Some(s) = (t + j).checked_sub(pad_left).filter(|&s| s < t_len) else {
                                    continue;
                                };
                                for c in 0..c_in {
                                    let xs = xv[s * c_in + c];
                                    let base = (j * c_in + c) * c_out;
                                    for o in 0..c_out {
                                        dw[base + o] += g[t * c_out + o] * xs;
                                    }
                                }
                            }
                        }
                    });
                    acc(*b, &mut |db| {
                        for (i, gi) in g.iter().enumerate() {
                            db[i % c_out] += gi;
                        }
                    });
                }
                Op::GroupMean { a, groups } => {
                    let (_, n) = nodes[a.0].value.dims2()?;
                    acc(*a, &mut |da| {
                        for (gi, grp) in groups.iter().enumerate() {
                            let inv = 1.0 / grp.len() as f64;
                            for r in grp.clone() {
                                for c in 0..n {
                                    da[r * n + c] += g[gi * n + c] * inv;
                                }
                            }
                        }
                    });
                }
                Op::ConcatRows { parts } => {
                    let mut offset = 0;
                    for p in parts {
                        let len = nodes[p.0].value.len();
                        acc(*p, &mut |dp| add_into(dp, &g[offset..offset + len]));
                        offset += len;
                    }
                }
                Op::Reshape { a } => acc(*a, &mut |da| add_into(da, &g)),
                Op::Sum { a } => acc(*a, &mut |da| da.iter_mut().for_each(|d| *d += g[0])),
                Op::SoftmaxCrossEntropy { logits, label, probs } => {
                    acc(*logits, &mut |dl| {
                        for (j, p) in probs.iter().enumerate() {
                            let onehot = if j == *label { 1.0 } else { 0.0 };
                            dl[j] += g[0] * (p - onehot);
                        }
                    });
                }
            }
            grads[i] = Some(g);
        }

        for (node, g) in self.nodes.iter_mut().zip(grads) {
            if let Some(g) = g {
                node.value.set_grad(g);
            }
        }
        Ok(())
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn matmul_values(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            for (o, bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += aip * bv;
            }
        }
    }
    out
}

fn conv1d_values(x: &[f64], w: &[f64], b: &[f64], t_len: usize, c_in: usize, k: usize, c_out: usize) -> Vec<f64> {
    let pad_left = (k - 1) / 2;
    let mut out = Vec::with_capacity(t_len * c_out);
    for _ in 0..t_len {
        out.extend_from_slice(b);
    }
    for t in 0..t_len {
        for j in 0..k {
            let Some(s) = (t + j).checked_sub(pad_left).filter(|&s| s < t_len) else {
                continue;
            };
            for c in 0..c_in {
                let xs = x[s * c_in + c];
                let base = (j * c_in + c) * c_out;
                for o in 0..c_out {
                    out[t * c_out + o] += xs * w[base + o];
                }
            }
        }
    }
    out
}

/// Numerically stable softmax (max subtraction).
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}
