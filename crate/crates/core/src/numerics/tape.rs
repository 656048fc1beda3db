//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every operation in evaluation order; [`Tape::backward`]
//! walks the record once in reverse. Inputs registered with
//! [`Tape::constant`] never receive gradients, and nothing downstream of only
//! constants is differentiated.

use std::sync::Arc;

use super::tensor::{matmul_acc, matmul_nt_acc, matmul_tn_acc, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Reshape(Var),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    GatherRows(Var, Arc<[usize]>),
    SliceCols(Var, usize, usize),
    Concat(Vec<Var>),
    SoftmaxRows(Var),
    SegmentSoftmax(Var, Arc<[usize]>),
    SegmentWeightedSum {
        values: Var,
        weights: Var,
        index: Arc<[usize]>,
        offsets: Arc<[usize]>,
    },
    LeakyRelu(Var, f64),
    Elu(Var),
    Sigmoid(Var),
    LogSigmoid(Var),
    Clamp(Var, f64, f64),
    RowDot(Var, Var),
    Sum(Var),
    Mean(Var),
    CrossEntropy(Var, Arc<[usize]>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, indexed by the leaf [`Var`]s.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    visited: usize,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Number of recorded operations the backward pass propagated through.
    pub fn visited(&self) -> usize {
        self.visited
    }
}

fn segment_ranges(offsets: &[usize]) -> impl Iterator<Item = (usize, std::ops::Range<usize>)> + '_ {
    offsets.windows(2).enumerate().map(|(s, w)| (s, w[0]..w[1]))
}

fn check_offsets(offsets: &[usize], len: usize, op: &'static str) -> Result<()> {
    let ok = offsets.first() == Some(&0)
        && offsets.last() == Some(&len)
        && offsets.windows(2).all(|w| w[0] <= w[1]);
    if ok {
        Ok(())
    } else {
        Err(Error::Contract(format!("{op}: malformed segment offsets")))
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

    /// Registers a trainable input.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Registers an input that is never differentiated.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn record(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numeric(format!("{name} produced a non-finite value")));
        }
        let needs = inputs.iter().any(|&v| self.needs(v));
        Ok(self.push(value, op, needs))
    }

    fn unary(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let t = self.value(a);
        let data = t.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::from_parts(t.shape().to_vec(), data);
        self.record(name, value, op, &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        self.record("reshape", value, Op::Reshape(a), &[a])
    }

    /// Matrix product. A rank-1 right operand is treated as a column vector
    /// and yields a rank-1 result.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 {
            return Err(Error::dim("matmul", &sa, &sb));
        }
        if sb.len() == 1 {
            let col = self.reshape(b, &[sb[0], 1])?;
            let out = self.matmul(a, col)?;
            return self.reshape(out, &[sa[0]]);
        }
        if sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", &sa, &sb));
        }
        let (n, k, m) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; n * m];
        matmul_acc(self.value(a).data(), self.value(b).data(), &mut out, n, k, m);
        self.record("matmul", Tensor::from_parts(vec![n, m], out), Op::MatMul(a, b), &[a, b])
    }

    /// `a * b^T` for `a: n x k`, `b: m x k`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
            return Err(Error::dim("matmul_t", &sa, &sb));
        }
        let (n, k, m) = (sa[0], sa[1], sb[0]);
        let mut out = vec![0.0; n * m];
        matmul_nt_acc(self.value(a).data(), self.value(b).data(), &mut out, n, k, m);
        self.record("matmul_t", Tensor::from_parts(vec![n, m], out), Op::MatMulT(a, b), &[a, b])
    }

    fn zip(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(name, self.shape(a), self.shape(b)));
        }
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::from_parts(ta.shape().to_vec(), data);
        self.record(name, value, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a row vector to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        if tr.len() != ta.cols() {
            return Err(Error::dim("add_row", ta.shape(), tr.shape()));
        }
        let c = ta.cols();
        let mut data = ta.data().to_vec();
        for (i, v) in data.iter_mut().enumerate() {
            *v += tr.data()[i % c];
        }
        let value = Tensor::from_parts(ta.shape().to_vec(), data);
        self.record("add_row", value, Op::AddRow(a, row), &[a, row])
    }

    /// Scales row `i` of `a` by `w[i]`.
    pub fn mul_col(&mut self, a: Var, w: Var) -> Result<Var> {
        let (ta, tw) = (self.value(a), self.value(w));
        if tw.len() != ta.rows() {
            return Err(Error::dim("mul_col", ta.shape(), tw.shape()));
        }
        let c = ta.cols();
        let mut data = ta.data().to_vec();
        for (i, v) in data.iter_mut().enumerate() {
            *v *= tw.data()[i / c];
        }
        let value = Tensor::from_parts(ta.shape().to_vec(), data);
        self.record("mul_col", value, Op::MulCol(a, w), &[a, w])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary("scale", a, |x| c * x, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary("add_scalar", a, |x| x + c, Op::AddScalar(a))
    }

    pub fn gather_rows(&mut self, a: Var, idx: impl Into<Arc<[usize]>>) -> Result<Var> {
        let idx: Arc<[usize]> = idx.into();
        let t = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= t.rows()) {
            return Err(Error::dim("gather_rows", t.shape(), &[bad]));
        }
        let value = t.gather_rows(&idx);
        self.record("gather_rows", value, Op::GatherRows(a, idx), &[a])
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 2 || start > end || end > t.cols() {
            return Err(Error::dim("slice_cols", t.shape(), &[start, end]));
        }
        let mut data = Vec::with_capacity(t.rows() * (end - start));
        for i in 0..t.rows() {
            data.extend_from_slice(&t.row(i)[start..end]);
        }
        let value = Tensor::from_parts(vec![t.rows(), end - start], data);
        self.record("slice_cols", value, Op::SliceCols(a, start, end), &[a])
    }

    /// Concatenation along the last axis. Inputs share their row count.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Contract("concat of nothing".into()))?;
        let rank = self.value(first).rank().max(1);
        let rows = self.value(first).rows();
        for &p in parts {
            let t = self.value(p);
            if t.rank().max(1) != rank || t.rows() != rows {
                return Err(Error::dim("concat", self.shape(first), t.shape()));
            }
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let shape = if rank == 1 { vec![total] } else { vec![rows, total] };
        let value = Tensor::from_parts(shape, data);
        self.record("concat", value, Op::Concat(parts.to_vec()), parts)
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let c = t.cols();
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(c.max(1)) {
            softmax_in_place(row);
        }
        let value = Tensor::from_parts(t.shape().to_vec(), data);
        self.record("softmax_rows", value, Op::SoftmaxRows(a), &[a])
    }

    /// Softmax of a flat vector within each segment `offsets[s]..offsets[s+1]`.
    pub fn segment_softmax(&mut self, a: Var, offsets: impl Into<Arc<[usize]>>) -> Result<Var> {
        let offsets: Arc<[usize]> = offsets.into();
        let t = self.value(a);
        if t.cols() != 1 && t.rank() == 2 {
            return Err(Error::dim("segment_softmax", t.shape(), &[t.len(), 1]));
        }
        check_offsets(&offsets, t.len(), "segment_softmax")?;
        let mut data = t.data().to_vec();
        for (_, r) in segment_ranges(&offsets) {
            softmax_in_place(&mut data[r]);
        }
        let value = Tensor::from_parts(t.shape().to_vec(), data);
        self.record("segment_softmax", value, Op::SegmentSoftmax(a, offsets), &[a])
    }

    /// `out[s] = sum_{e in segment s} weights[e] * values[index[e]]`.
    pub fn segment_weighted_sum(
        &mut self,
        values: Var,
        weights: Var,
        index: impl Into<Arc<[usize]>>,
        offsets: impl Into<Arc<[usize]>>,
    ) -> Result<Var> {
        let index: Arc<[usize]> = index.into();
        let offsets: Arc<[usize]> = offsets.into();
        let (tv, tw) = (self.value(values), self.value(weights));
        if tw.len() != index.len() || tv.rank() != 2 {
            return Err(Error::dim("segment_weighted_sum", tv.shape(), tw.shape()));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= tv.rows()) {
            return Err(Error::dim("segment_weighted_sum", tv.shape(), &[bad]));
        }
        check_offsets(&offsets, index.len(), "segment_weighted_sum")?;
        let c = tv.cols();
        let segs = offsets.len() - 1;
        let mut out = vec![0.0; segs * c];
        for (s, r) in segment_ranges(&offsets) {
            let orow = &mut out[s * c..(s + 1) * c];
            for e in r {
                let w = tw.data()[e];
                for (o, &v) in orow.iter_mut().zip(tv.row(index[e])) {
                    *o += w * v;
                }
            }
        }
        let value = Tensor::from_parts(vec![segs, c], out);
        let op = Op::SegmentWeightedSum {
            values,
            weights,
            index,
            offsets,
        };
        self.record("segment_weighted_sum", value, op, &[values, weights])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        self.unary("leaky_relu", a, |x| leaky_relu(x, slope), Op::LeakyRelu(a, slope))
    }

    pub fn elu(&mut self, a: Var) -> Result<Var> {
        self.unary("elu", a, elu, Op::Elu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, sigmoid, Op::Sigmoid(a))
    }

    /// Numerically stable `ln(sigmoid(x))`.
    pub fn log_sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("log_sigmoid", a, log_sigmoid, Op::LogSigmoid(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        self.unary("clamp", a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    /// Row-wise dot products of two equally shaped matrices, as a rank-1 vector.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim("row_dot", self.shape(a), self.shape(b)));
        }
        let (ta, tb) = (self.value(a), self.value(b));
        let data = (0..ta.rows())
            .map(|i| ta.row(i).iter().zip(tb.row(i)).map(|(x, y)| x * y).sum())
            .collect();
        self.record("row_dot", Tensor::vector(data), Op::RowDot(a, b), &[a, b])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.record("sum", Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(Error::Contract("mean of an empty tensor".into()));
        }
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        self.record("mean", Tensor::scalar(m), Op::Mean(a), &[a])
    }

    /// Mean over the given tensors (all of one shape).
    pub fn mean_of(&mut self, parts: &[Var]) -> Result<Var> {
        let (&first, rest) = parts
            .split_first()
            .ok_or_else(|| Error::Contract("mean of no tensors".into()))?;
        let mut acc = first;
        for &p in rest {
            acc = self.add(acc, p)?;
        }
        if parts.len() == 1 {
            return Ok(acc);
        }
        self.scale(acc, 1.0 / parts.len() as f64)
    }

    /// Sum of a list of scalars.
    pub fn add_all(&mut self, parts: &[Var]) -> Result<Var> {
        let (&first, rest) = parts
            .split_first()
            .ok_or_else(|| Error::Contract("sum of no tensors".into()))?;
        let mut acc = first;
        for &p in rest {
            acc = self.add(acc, p)?;
        }
        Ok(acc)
    }

    /// Mean cross-entropy of row-wise softmax against integer labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: impl Into<Arc<[usize]>>) -> Result<Var> {
        let labels: Arc<[usize]> = labels.into();
        let t = self.value(logits);
        if t.rows() != labels.len() || labels.is_empty() {
            return Err(Error::dim("cross_entropy", t.shape(), &[labels.len()]));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= t.cols()) {
            return Err(Error::Contract(format!(
                "label {bad} out of range for {} classes",
                t.cols()
            )));
        }
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let row = t.row(i);
            total += log_sum_exp(row) - row[y];
        }
        let value = Tensor::scalar(total / labels.len() as f64);
        self.record("cross_entropy", value, Op::CrossEntropy(logits, labels), &[logits])
    }

    /// Runs the reverse pass from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = &self.nodes[output.0];
        if out.value.len() != 1 {
            return Err(Error::dim("backward", out.value.shape(), &[]));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::full(out.value.shape(), 1.0));
        let mut visited = 0;
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            visited += 1;
            self.propagate(node, &g, &mut grads);
        }
        for g in grads.iter().flatten() {
            if !g.is_finite() {
                return Err(Error::Numeric("non-finite gradient".into()));
            }
        }
        Ok(Gradients { grads, visited })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce(&mut Tensor)) {
        if !self.needs(v) {
            return;
        }
        let slot = &mut grads[v.0];
        let g = slot.get_or_insert_with(|| Tensor::zeros(self.nodes[v.0].value.shape()));
        f(g);
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Reshape(a) => self.accumulate(grads, *a, |d| {
                for (x, v) in d.data_mut().iter_mut().zip(g.data()) {
                    *x += v;
                }
            }),
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (n, k, m) = (ta.rows(), ta.cols(), tb.cols());
                self.accumulate(grads, *a, |d| matmul_nt_acc(g.data(), tb.data(), d.data_mut(), n, m, k));
                self.accumulate(grads, *b, |d| matmul_tn_acc(ta.data(), g.data(), d.data_mut(), n, k, m));
            }
            Op::MatMulT(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (n, k, m) = (ta.rows(), ta.cols(), tb.rows());
                self.accumulate(grads, *a, |d| matmul_acc(g.data(), tb.data(), d.data_mut(), n, m, k));
                self.accumulate(grads, *b, |d| matmul_tn_acc(g.data(), ta.data(), d.data_mut(), n, m, k));
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |d| d.add_assign(g));
                self.accumulate(grads, *b, |d| d.add_assign(g));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |d| d.add_assign(g));
                self.accumulate(grads, *b, |d| {
                    for (x, v) in d.data_mut().iter_mut().zip(g.data()) {
                        *x -= v;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                self.accumulate(grads, *a, |d| {
                    for ((x, gv), bv) in d.data_mut().iter_mut().zip(g.data()).zip(tb.data()) {
                        *x += gv * bv;
                    }
                });
                self.accumulate(grads, *b, |d| {
                    for ((x, gv), av) in d.data_mut().iter_mut().zip(g.data()).zip(ta.data()) {
                        *x += gv * av;
                    }
                });
            }
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, |d| d.add_assign(g));
                let c = g.cols();
                self.accumulate(grads, *row, |d| {
                    for (i, gv) in g.data().iter().enumerate() {
                        d.data_mut()[i % c] += gv;
                    }
                });
            }
            Op::MulCol(a, w) => {
                let (ta, tw) = (self.value(*a), self.value(*w));
                let c = ta.cols();
                self.accumulate(grads, *a, |d| {
                    for (i, (x, gv)) in d.data_mut().iter_mut().zip(g.data()).enumerate() {
                        *x += gv * tw.data()[i / c];
                    }
                });
                self.accumulate(grads, *w, |d| {
                    for (i, (gv, av)) in g.data().iter().zip(ta.data()).enumerate() {
                        d.data_mut()[i / c] += gv * av;
                    }
                });
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, |d| {
                for (x, v) in d.data_mut().iter_mut().zip(g.data()) {
                    *x += c * v;
                }
            }),
            Op::AddScalar(a) => self.accumulate(grads, *a, |d| d.add_assign(g)),
            Op::GatherRows(a, idx) => self.accumulate(grads, *a, |d| {
                for (k, &i) in idx.iter().enumerate() {
                    for (x, v) in d.row_mut(i).iter_mut().zip(g.row(k)) {
                        *x += v;
                    }
                }
            }),
            Op::SliceCols(a, start, end) => self.accumulate(grads, *a, |d| {
                for i in 0..g.rows() {
                    for (x, v) in d.row_mut(i)[*start..*end].iter_mut().zip(g.row(i)) {
                        *x += v;
                    }
                }
            }),
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    self.accumulate(grads, p, |d| {
                        for i in 0..g.rows() {
                            for (x, v) in d.row_mut(i).iter_mut().zip(&g.row(i)[offset..offset + w]) {
                                *x += v;
                            }
                        }
                    });
                    offset += w;
                }
            }
            Op::SoftmaxRows(a) => {
                let c = y.cols().max(1);
                self.accumulate(grads, *a, |d| {
                    for ((dr, yr), gr) in d
                        .data_mut()
                        .chunks_mut(c)
                        .zip(y.data().chunks(c))
                        .zip(g.data().chunks(c))
                    {
                        softmax_backward(dr, yr, gr);
                    }
                });
            }
            Op::SegmentSoftmax(a, offsets) => self.accumulate(grads, *a, |d| {
                for (_, r) in segment_ranges(offsets) {
                    softmax_backward(&mut d.data_mut()[r.clone()], &y.data()[r.clone()], &g.data()[r]);
                }
            }),
            Op::SegmentWeightedSum {
                values,
                weights,
                index,
                offsets,
            } => {
                let (tv, tw) = (self.value(*values), self.value(*weights));
                self.accumulate(grads, *values, |d| {
                    for (s, r) in segment_ranges(offsets) {
                        for e in r {
                            let w = tw.data()[e];
                            for (x, gv) in d.row_mut(index[e]).iter_mut().zip(g.row(s)) {
                                *x += w * gv;
                            }
                        }
                    }
                });
                self.accumulate(grads, *weights, |d| {
                    for (s, r) in segment_ranges(offsets) {
                        for e in r {
                            let dot: f64 = tv.row(index[e]).iter().zip(g.row(s)).map(|(a, b)| a * b).sum();
                            d.data_mut()[e] += dot;
                        }
                    }
                });
            }
            Op::LeakyRelu(a, slope) => {
                let x = self.value(*a);
                self.accumulate(grads, *a, |d| {
                    for ((dv, gv), xv) in d.data_mut().iter_mut().zip(g.data()).zip(x.data()) {
                        *dv += gv * if *xv > 0.0 { 1.0 } else { *slope };
                    }
                });
            }
            Op::Elu(a) => {
                let x = self.value(*a);
                self.accumulate(grads, *a, |d| {
                    for (((dv, gv), xv), yv) in d.data_mut().iter_mut().zip(g.data()).zip(x.data()).zip(y.data()) {
                        *dv += gv * if *xv > 0.0 { 1.0 } else { yv + 1.0 };
                    }
                });
            }
            Op::Sigmoid(a) => self.accumulate(grads, *a, |d| {
                for ((dv, gv), yv) in d.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                    *dv += gv * yv * (1.0 - yv);
                }
            }),
            Op::LogSigmoid(a) => {
                let x = self.value(*a);
                self.accumulate(grads, *a, |d| {
                    for ((dv, gv), xv) in d.data_mut().iter_mut().zip(g.data()).zip(x.data()) {
                        *dv += gv * sigmoid(-xv);
                    }
                });
            }
            Op::Clamp(a, lo, hi) => {
                let x = self.value(*a);
                self.accumulate(grads, *a, |d| {
                    for ((dv, gv), xv) in d.data_mut().iter_mut().zip(g.data()).zip(x.data()) {
                        if *xv >= *lo && *xv <= *hi {
                            *dv += gv;
                        }
                    }
                });
            }
            Op::RowDot(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                self.accumulate(grads, *a, |d| {
                    for i in 0..ta.rows() {
                        let gi = g.data()[i];
                        for (x, bv) in d.row_mut(i).iter_mut().zip(tb.row(i)) {
                            *x += gi * bv;
                        }
                    }
                });
                self.accumulate(grads, *b, |d| {
                    for i in 0..tb.rows() {
                        let gi = g.data()[i];
                        for (x, av) in d.row_mut(i).iter_mut().zip(ta.row(i)) {
                            *x += gi * av;
                        }
                    }
                });
            }
            Op::Sum(a) => {
                let gv = g.item();
                self.accumulate(grads, *a, |d| d.data_mut().iter_mut().for_each(|x| *x += gv));
            }
            Op::Mean(a) => {
                let n = self.value(*a).len() as f64;
                let gv = g.item() / n;
                self.accumulate(grads, *a, |d| d.data_mut().iter_mut().for_each(|x| *x += gv));
            }
            Op::CrossEntropy(a, labels) => {
                let x = self.value(*a);
                let scale = g.item() / labels.len() as f64;
                self.accumulate(grads, *a, |d| {
                    for (i, &label) in labels.iter().enumerate() {
                        let mut p = x.row(i).to_vec();
                        softmax_in_place(&mut p);
                        for (k, (dv, pv)) in d.row_mut(i).iter_mut().zip(&p).enumerate() {
                            let target = if k == label { 1.0 } else { 0.0 };
                            *dv += scale * (pv - target);
                        }
                    }
                });
            }
        }
    }
}

fn softmax_backward(d: &mut [f64], y: &[f64], g: &[f64]) {
    let dot: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
    for ((dv, yv), gv) in d.iter_mut().zip(y).zip(g) {
        *dv += yv * (gv - dot);
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    for x in v.iter_mut() {
        *x /= s;
    }
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    out
}

pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}
