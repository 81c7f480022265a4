//! Reverse-mode automatic differentiation over an append-only tape.
//!
//! Every op evaluates eagerly and appends a node holding its value and the
//! indices of its parents. Parents always precede children, so insertion
//! order is a topological order and [`Tape::backward`] is a single reverse
//! sweep.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::{Scalar, Shape, Tensor};

/// Below this a trace is treated as zero by the guarded reciprocal/sqrt.
pub const GUARD_EPS: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    Constant,
    Conv2d,
    Add,
    Mul,
    Scale,
    Relu,
    Sigmoid,
    Concat,
    SliceChannels,
    Reshape,
    Transpose,
    MatMul,
    SoftmaxRows,
    PixelShuffle,
    PixelUnshuffle,
    CovariancePool,
    Trace,
    GuardedRecip,
    GuardedSqrt,
    MeanLast,
    Sum,
    Mean,
    L1Loss,
}

impl OpKind {
    pub const ALL: [OpKind; 24] = [
        OpKind::Leaf,
        OpKind::Constant,
        OpKind::Conv2d,
        OpKind::Add,
        OpKind::Mul,
        OpKind::Scale,
        OpKind::Relu,
        OpKind::Sigmoid,
        OpKind::Concat,
        OpKind::SliceChannels,
        OpKind::Reshape,
        OpKind::Transpose,
        OpKind::MatMul,
        OpKind::SoftmaxRows,
        OpKind::PixelShuffle,
        OpKind::PixelUnshuffle,
        OpKind::CovariancePool,
        OpKind::Trace,
        OpKind::GuardedRecip,
        OpKind::GuardedSqrt,
        OpKind::MeanLast,
        OpKind::Sum,
        OpKind::Mean,
        OpKind::L1Loss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::Constant => "constant",
            OpKind::Conv2d => "conv2d",
            OpKind::Add => "add",
            OpKind::Mul => "mul",
            OpKind::Scale => "scale",
            OpKind::Relu => "relu",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Concat => "concat_channels",
            OpKind::SliceChannels => "slice_channels",
            OpKind::Reshape => "reshape",
            OpKind::Transpose => "transpose",
            OpKind::MatMul => "matmul",
            OpKind::SoftmaxRows => "softmax_rows",
            OpKind::PixelShuffle => "pixel_shuffle",
            OpKind::PixelUnshuffle => "pixel_unshuffle",
            OpKind::CovariancePool => "covariance_pool",
            OpKind::Trace => "trace",
            OpKind::GuardedRecip => "guarded_recip",
            OpKind::GuardedSqrt => "guarded_sqrt",
            OpKind::MeanLast => "mean_last",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::L1Loss => "l1_loss",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.name() == name)
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Constant,
    Conv2d { x: usize, w: usize, b: usize, pad: usize },
    Add { a: usize, b: usize, broadcast: bool },
    Mul { a: usize, b: usize, broadcast: bool },
    Scale { a: usize, s: f64 },
    Relu(usize),
    Sigmoid(usize),
    Concat(Vec<usize>),
    SliceChannels { a: usize, start: usize },
    Reshape(usize),
    Transpose(usize),
    MatMul { a: usize, b: usize },
    SoftmaxRows(usize),
    PixelShuffle { a: usize, r: usize },
    PixelUnshuffle { a: usize, r: usize },
    CovariancePool(usize),
    Trace(usize),
    GuardedRecip(usize),
    GuardedSqrt(usize),
    MeanLast(usize),
    Sum(usize),
    Mean(usize),
    L1Loss { pred: usize, target: usize },
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Constant => OpKind::Constant,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::Add { .. } => OpKind::Add,
            Op::Mul { .. } => OpKind::Mul,
            Op::Scale { .. } => OpKind::Scale,
            Op::Relu(_) => OpKind::Relu,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::Concat(_) => OpKind::Concat,
            Op::SliceChannels { .. } => OpKind::SliceChannels,
            Op::Reshape(_) => OpKind::Reshape,
            Op::Transpose(_) => OpKind::Transpose,
            Op::MatMul { .. } => OpKind::MatMul,
            Op::SoftmaxRows(_) => OpKind::SoftmaxRows,
            Op::PixelShuffle { .. } => OpKind::PixelShuffle,
            Op::PixelUnshuffle { .. } => OpKind::PixelUnshuffle,
            Op::CovariancePool(_) => OpKind::CovariancePool,
            Op::Trace(_) => OpKind::Trace,
            Op::GuardedRecip(_) => OpKind::GuardedRecip,
            Op::GuardedSqrt(_) => OpKind::GuardedSqrt,
            Op::MeanLast(_) => OpKind::MeanLast,
            Op::Sum(_) => OpKind::Sum,
            Op::Mean(_) => OpKind::Mean,
            Op::L1Loss { .. } => OpKind::L1Loss,
        }
    }
}

struct Node<T> {
    op: Op,
    value: Tensor<T>,
}

/// Append-only record of a forward computation.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    check_finite: bool,
    trace: Option<String>,
    fault: Option<OpKind>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    /// Finiteness checks follow `debug_assertions`.
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            check_finite: cfg!(debug_assertions),
            trace: None,
            fault: None,
        }
    }

    pub fn set_check_finite(&mut self, on: bool) {
        self.check_finite = on;
    }

    /// Record one line per op (kind, shape, value range), readable with
    /// [`Tape::trace_dump`].
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(String::new);
    }

    pub fn trace_dump(&self) -> Option<&str> {
        self.trace.as_deref()
    }

    /// Scales the backward output of every `kind` node by 1.5. Only for
    /// checking that the gradient checker catches a broken backward.
    #[doc(hidden)]
    pub fn inject_backward_fault(&mut self, kind: OpKind) {
        self.fault = Some(kind);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].op.kind()
    }

    /// Every node of the given kind, in tape order.
    pub fn vars_of(&self, kind: OpKind) -> impl Iterator<Item = Var> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(move |(_, n)| n.op.kind() == kind)
            .map(|(i, _)| Var(i))
    }

    fn push(&mut self, op: Op, value: Tensor<T>) -> Result<Var> {
        let kind = op.kind();
        if self.check_finite && !value.all_finite() {
            return Err(Error::NonFinite {
                op: kind.name(),
                shape: value.shape(),
            });
        }
        if let Some(trace) = self.trace.as_mut() {
            let (lo, hi) = value
                .data()
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    let v = v.as_f64();
                    (lo.min(v), hi.max(v))
                });
            let _ = writeln!(
                trace,
                "#{:<5} {:<16} {:<16} min={:.6e} max={:.6e}",
                self.nodes.len(),
                kind.name(),
                format!("{}", value.shape()),
                lo,
                hi
            );
        }
        self.nodes.push(Node { op, value });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A value that receives a gradient.
    pub fn leaf(&mut self, value: Tensor<T>) -> Result<Var> {
        self.push(Op::Leaf, value)
    }

    /// A value treated as constant by backward.
    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var> {
        self.push(Op::Constant, value)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, pad: usize) -> Result<Var> {
        let out = ops::conv2d(self.value(x), self.value(w), self.value(b), pad)?;
        self.push(Op::Conv2d { x: x.0, w: w.0, b: b.0, pad }, out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let broadcast = ops::check_broadcast("add", self.shape(a), self.shape(b))?;
        let out = ops::binary("add", self.value(a), self.value(b), |u, v| u + v)?;
        self.push(Op::Add { a: a.0, b: b.0, broadcast }, out)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let broadcast = ops::check_broadcast("mul", self.shape(a), self.shape(b))?;
        let out = ops::binary("mul", self.value(a), self.value(b), |u, v| u * v)?;
        self.push(Op::Mul { a: a.0, b: b.0, broadcast }, out)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let k = T::of(s);
        let out = self.value(a).map(|v| v * k);
        self.push(Op::Scale { a: a.0, s }, out)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(Op::Relu(a.0), out)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|v| {
            if v >= T::zero() {
                T::one() / (T::one() + (-v).exp())
            } else {
                let e = v.exp();
                e / (T::one() + e)
            }
        });
        self.push(Op::Sigmoid(a.0), out)
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let out = ops::concat_channels(&values)?;
        self.push(Op::Concat(parts.iter().map(|p| p.0).collect()), out)
    }

    pub fn slice_channels(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let out = ops::slice_channels(self.value(a), start, len)?;
        self.push(Op::SliceChannels { a: a.0, start }, out)
    }

    pub fn reshape(&mut self, a: Var, shape: Shape) -> Result<Var> {
        let out = self.value(a).clone().reshaped(shape)?;
        self.push(Op::Reshape(a.0), out)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = ops::transpose(self.value(a));
        self.push(Op::Transpose(a.0), out)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::matmul(self.value(a), self.value(b))?;
        self.push(Op::MatMul { a: a.0, b: b.0 }, out)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let out = ops::softmax_rows(self.value(a));
        self.push(Op::SoftmaxRows(a.0), out)
    }

    pub fn pixel_shuffle(&mut self, a: Var, r: usize) -> Result<Var> {
        let out = ops::pixel_shuffle(self.value(a), r)?;
        self.push(Op::PixelShuffle { a: a.0, r }, out)
    }

    pub fn pixel_unshuffle(&mut self, a: Var, r: usize) -> Result<Var> {
        let out = ops::pixel_unshuffle(self.value(a), r)?;
        self.push(Op::PixelUnshuffle { a: a.0, r }, out)
    }

    pub fn covariance_pool(&mut self, a: Var) -> Result<Var> {
        let out = ops::covariance_pool(self.value(a))?;
        self.push(Op::CovariancePool(a.0), out)
    }

    pub fn trace(&mut self, a: Var) -> Result<Var> {
        let out = ops::trace(self.value(a))?;
        self.push(Op::Trace(a.0), out)
    }

    /// `1/x`, or 0 where `x < 1e-12`.
    pub fn guarded_recip(&mut self, a: Var) -> Result<Var> {
        let eps = T::of(GUARD_EPS);
        let out = self
            .value(a)
            .map(|v| if v >= eps { T::one() / v } else { T::zero() });
        self.push(Op::GuardedRecip(a.0), out)
    }

    /// `√x`, or 0 where `x < 1e-12`.
    pub fn guarded_sqrt(&mut self, a: Var) -> Result<Var> {
        let eps = T::of(GUARD_EPS);
        let out = self
            .value(a)
            .map(|v| if v >= eps { v.sqrt() } else { T::zero() });
        self.push(Op::GuardedSqrt(a.0), out)
    }

    pub fn mean_last(&mut self, a: Var) -> Result<Var> {
        let out = ops::mean_last(self.value(a));
        self.push(Op::MeanLast(a.0), out)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(Op::Sum(a.0), out)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        let out = Tensor::scalar(v.sum() / T::of(v.numel() as f64));
        self.push(Op::Mean(a.0), out)
    }

    /// Mean absolute difference. The subgradient at equality is 0.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.shape() != t.shape() {
            return Err(Error::ShapeMismatch {
                op: "l1_loss",
                lhs: p.shape(),
                rhs: t.shape(),
            });
        }
        let total: T = p.data().iter().zip(t.data()).map(|(&a, &b)| (a - b).abs()).sum();
        let out = Tensor::scalar(total / T::of(p.numel() as f64));
        self.push(Op::L1Loss { pred: pred.0, target: target.0 }, out)
    }

    /// Reverse sweep from a scalar `loss`. Gradients are kept for leaf
    /// nodes only; leaves the loss does not depend on get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let ls = self.shape(loss);
        if ls.numel() != 1 {
            return Err(Error::contract(format!("backward needs a scalar loss, got {ls}")));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(ls, T::one()));

        for k in (0..=loss.0).rev() {
            let node = &self.nodes[k];
            if matches!(node.op, Op::Leaf | Op::Constant) {
                continue;
            }
            let Some(g) = grads[k].take() else { continue };
            let mut contributions = self.node_backward(k, &g)?;
            if self.fault == Some(node.op.kind()) {
                let bump = T::of(1.5);
                for (_, t) in contributions.iter_mut() {
                    for v in t.data_mut() {
                        *v = *v * bump;
                    }
                }
            }
            for (parent, contrib) in contributions {
                if matches!(self.nodes[parent].op, Op::Constant) {
                    continue;
                }
                debug_assert!(parent < k);
                match grads[parent].as_mut() {
                    Some(acc) => acc.add_assign(&contrib),
                    None => grads[parent] = Some(contrib),
                }
            }
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        let leaf = self.nodes.iter().map(|n| matches!(n.op, Op::Leaf)).collect();
        Ok(Gradients { grads, shapes, leaf })
    }

    fn node_backward(&self, k: usize, g: &Tensor<T>) -> Result<Vec<(usize, Tensor<T>)>> {
        let node = &self.nodes[k];
        let val = |i: usize| &self.nodes[i].value;
        let out = match node.op {
            Op::Leaf | Op::Constant => Vec::new(),
            Op::Conv2d { x, w, b, pad } => {
                let (dx, dw, db) = ops::conv2d_backward(val(x), val(w), pad, g);
                let db = db.reshaped(val(b).shape())?;
                vec![(x, dx), (w, dw), (b, db)]
            }
            Op::Add { a, b, broadcast } => {
                let db = if broadcast {
                    ops::reduce_to_channels(g, val(b).shape())
                } else {
                    g.clone()
                };
                vec![(a, g.clone()), (b, db)]
            }
            Op::Mul { a, b, broadcast } => {
                let da = ops::binary("mul", g, val(b), |u, v| u * v)?;
                let full = ops::binary("mul", g, val(a), |u, v| u * v)?;
                let db = if broadcast {
                    ops::reduce_to_channels(&full, val(b).shape())
                } else {
                    full
                };
                vec![(a, da), (b, db)]
            }
            Op::Scale { a, s } => {
                let k = T::of(s);
                vec![(a, g.map(|v| v * k))]
            }
            Op::Relu(a) => {
                let x = val(a);
                let d = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(&gv, &xv)| if xv > T::zero() { gv } else { T::zero() })
                    .collect();
                vec![(a, Tensor::from_vec(x.shape(), d)?)]
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                let d = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(&gv, &yv)| gv * yv * (T::one() - yv))
                    .collect();
                vec![(a, Tensor::from_vec(y.shape(), d)?)]
            }
            Op::Concat(ref parts) => {
                let mut start = 0;
                let mut out = Vec::with_capacity(parts.len());
                for &p in parts {
                    let len = val(p).shape().c;
                    out.push((p, ops::slice_channels(g, start, len)?));
                    start += len;
                }
                out
            }
            Op::SliceChannels { a, start } => {
                let s = val(a).shape();
                let gs = g.shape();
                let mut d = Tensor::zeros(s);
                let plane = s.plane();
                for n in 0..s.n {
                    let src = &g.data()[n * gs.c * plane..(n + 1) * gs.c * plane];
                    let base = (n * s.c + start) * plane;
                    d.data_mut()[base..base + gs.c * plane].copy_from_slice(src);
                }
                vec![(a, d)]
            }
            Op::Reshape(a) => vec![(a, g.clone().reshaped(val(a).shape())?)],
            Op::Transpose(a) => vec![(a, ops::transpose(g))],
            Op::MatMul { a, b } => {
                let (da, db) = ops::matmul_backward(val(a), val(b), g);
                vec![(a, da), (b, db)]
            }
            Op::SoftmaxRows(a) => vec![(a, ops::softmax_rows_backward(&node.value, g))],
            Op::PixelShuffle { a, r } => vec![(a, ops::pixel_unshuffle(g, r)?)],
            Op::PixelUnshuffle { a, r } => vec![(a, ops::pixel_shuffle(g, r)?)],
            Op::CovariancePool(a) => vec![(a, ops::covariance_pool_backward(val(a), g))],
            Op::Trace(a) => {
                let s = val(a).shape();
                let mut d = Tensor::zeros(s);
                for n in 0..s.n {
                    for i in 0..s.h {
                        d.set(n, 0, i, i, g.data()[n]);
                    }
                }
                vec![(a, d)]
            }
            Op::GuardedRecip(a) => {
                let eps = T::of(GUARD_EPS);
                let x = val(a);
                let d = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(&gv, &xv)| if xv >= eps { -gv / (xv * xv) } else { T::zero() })
                    .collect();
                vec![(a, Tensor::from_vec(x.shape(), d)?)]
            }
            Op::GuardedSqrt(a) => {
                let eps = T::of(GUARD_EPS);
                let x = val(a);
                let half = T::of(0.5);
                let d = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(&gv, &xv)| if xv >= eps { gv * half / xv.sqrt() } else { T::zero() })
                    .collect();
                vec![(a, Tensor::from_vec(x.shape(), d)?)]
            }
            Op::MeanLast(a) => {
                let s = val(a).shape();
                let inv = T::one() / T::of(s.w as f64);
                let mut d = Tensor::zeros(s);
                for (row, &gv) in d.data_mut().chunks_mut(s.w).zip(g.data()) {
                    row.fill(gv * inv);
                }
                vec![(a, d)]
            }
            Op::Sum(a) => vec![(a, Tensor::full(val(a).shape(), g.data()[0]))],
            Op::Mean(a) => {
                let s = val(a).shape();
                vec![(a, Tensor::full(s, g.data()[0] / T::of(s.numel() as f64)))]
            }
            Op::L1Loss { pred, target } => {
                let (p, t) = (val(pred), val(target));
                let scale = g.data()[0] / T::of(p.numel() as f64);
                let d: Vec<T> = p
                    .data()
                    .iter()
                    .zip(t.data())
                    .map(|(&a, &b)| {
                        if a > b {
                            scale
                        } else if a < b {
                            -scale
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                let dp = Tensor::from_vec(p.shape(), d)?;
                let dt = dp.map(|v| -v);
                vec![(pred, dp), (target, dt)]
            }
        };
        Ok(out)
    }
}

/// Leaf gradients from one backward sweep.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Shape>,
    leaf: Vec<bool>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss with respect to a leaf; zeros when the loss
    /// does not depend on it.
    ///
    /// # Panics
    /// If `v` is not a leaf of the tape this came from.
    pub fn get(&self, v: Var) -> Tensor<T> {
        assert!(self.leaf[v.0], "gradients are only retained for leaves");
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(self.shapes[v.0]))
    }

    pub fn take(&mut self, v: Var) -> Tensor<T> {
        assert!(self.leaf[v.0], "gradients are only retained for leaves");
        self.grads[v.0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(self.shapes[v.0]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(tape: &mut Tape<f64>, shape: Shape, data: &[f64]) -> Var {
        tape.leaf(Tensor::from_vec(shape, data.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, Shape::new(1, 2, 2, 2), &[1.0, -2.0, 3.0, 0.5, 0.0, 9.0, -1.0, 2.0]);
        let loss = tape.sum(x).unwrap();
        let g = tape.backward(loss).unwrap();
        assert!(g.get(x).data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn relu_gradient_sign_cases() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, Shape::matrix(1, 3), &[-1.0, 2.0, 0.0]);
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 2.0, 0.0]);
        let loss = tape.sum(y).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, Shape::matrix(1, 1), &[0.0]);
        let y = tape.sigmoid(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5]);
    }

    #[test]
    fn unreachable_leaf_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, Shape::matrix(1, 2), &[1.0, 2.0]);
        let unused = leaf(&mut tape, Shape::matrix(2, 2), &[1.0; 4]);
        let loss = tape.sum(x).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(unused), Tensor::zeros(Shape::matrix(2, 2)));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, Shape::matrix(1, 2), &[1.0, 2.0]);
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn shared_parent_accumulates() {
        // loss = sum(x * x) → grad 2x
        let mut tape = Tape::new();
        let x = leaf(&mut tape, Shape::matrix(1, 3), &[1.0, -2.0, 0.5]);
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).data(), &[2.0, -4.0, 1.0]);
    }

    #[test]
    fn l1_gradient_is_sign_over_n() {
        let mut tape = Tape::new();
        let p = leaf(&mut tape, Shape::matrix(1, 4), &[1.0, 2.0, 3.0, 4.0]);
        let t = tape
            .constant(Tensor::from_vec(Shape::matrix(1, 4), vec![0.0, 3.0, 3.0, 5.0]).unwrap())
            .unwrap();
        let loss = tape.l1_loss(p, t).unwrap();
        assert_eq!(tape.value(loss).data(), &[0.75]);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(p).data(), &[0.25, -0.25, 0.0, -0.25]);
    }

    #[test]
    fn non_finite_values_are_reported() {
        let mut tape = Tape::<f64>::new();
        tape.set_check_finite(true);
        let x = leaf(&mut tape, Shape::matrix(1, 1), &[f64::MAX]);
        let err = tape.scale(x, 10.0).unwrap_err();
        assert_eq!(
            err,
            Error::NonFinite {
                op: "scale",
                shape: Shape::matrix(1, 1)
            }
        );
    }

    #[test]
    fn trace_records_each_op() {
        let mut tape = Tape::<f32>::new();
        tape.enable_trace();
        let x = tape.leaf(Tensor::full(Shape::new(1, 2, 3, 3), 1.5)).unwrap();
        let _ = tape.relu(x).unwrap();
        let dump = tape.trace_dump().unwrap();
        assert_eq!(dump.lines().count(), 2);
        assert!(dump.lines().nth(1).unwrap().contains("relu"));
        assert!(dump.contains("1×2×3×3"));
    }

    #[test]
    fn op_names_roundtrip() {
        for k in OpKind::ALL {
            assert_eq!(OpKind::from_name(k.name()), Some(k));
        }
    }
}
