//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation as a node whose parents precede it, so
//! the insertion order is already a topological order. [`Graph::backward`]
//! walks the nodes once in reverse and accumulates gradients into leaves that
//! were created with [`Graph::param`]. Leaf gradients accumulate across
//! repeated `backward` calls until [`Graph::zero_grad`] is called.
//!
//! Binary elementwise operations accept equal shapes or a rank-0 operand on
//! either side; there is no other broadcasting. Row-wise bias addition and
//! layer normalization are dedicated operations.

use crate::tensor::{Result, Tensor, TensorError, NORM_EPSILON};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Exp,
    Ln,
    Sigmoid,
    Tanh,
    Gelu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Binary(BinaryOp, Var, Var),
    Unary(UnaryOp, Var),
    Scale(Var, f64),
    Offset(Var),
    Clamp(Var, f64, f64),
    MatMul(Var, Var),
    Transpose(Var),
    AddBias(Var, Var),
    Reduce(Reduction, Var),
    ReduceAxis(Reduction, Var, usize),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    GatherRows(Var, Vec<usize>),
    Select(Var, usize),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    Stack(Vec<Var>),
    Reshape(Var),
    Cosine(Var, Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Single-threaded computation graph.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * p];
    for i in 0..m {
        let row = &mut out[i * p..(i + 1) * p];
        for (kk, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[kk * p..(kk + 1) * p]) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

/// Views a rank-1 or rank-2 shape as (rows, cols).
fn as_matrix(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        0 => (1, 1),
        1 => (1, shape[0]),
        _ => (shape[0], shape[1]),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Constant leaf; receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable leaf; receives accumulated gradients on `backward`.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn item(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    // ---- elementwise -------------------------------------------------

    pub fn binary(&mut self, op: BinaryOp, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let f = match op {
            BinaryOp::Add => |x: f64, y: f64| x + y,
            BinaryOp::Sub => |x: f64, y: f64| x - y,
            BinaryOp::Mul => |x: f64, y: f64| x * y,
        };
        let value = if ta.shape() == tb.shape() {
            let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(ta.shape().to_vec(), data)?
        } else if tb.is_scalar() {
            let y = tb.item();
            Tensor::new(ta.shape().to_vec(), ta.data().iter().map(|&x| f(x, y)).collect())?
        } else if ta.is_scalar() {
            let x = ta.item();
            Tensor::new(tb.shape().to_vec(), tb.data().iter().map(|&y| f(x, y)).collect())?
        } else {
            return Err(TensorError::ShapeMismatch {
                op: match op {
                    BinaryOp::Add => "add",
                    BinaryOp::Sub => "sub",
                    BinaryOp::Mul => "mul",
                },
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Binary(op, a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Mul, a, b)
    }

    pub fn unary(&mut self, op: UnaryOp, x: Var) -> Var {
        let f: fn(f64) -> f64 = match op {
            UnaryOp::Neg => |v| -v,
            UnaryOp::Exp => f64::exp,
            UnaryOp::Ln => f64::ln,
            UnaryOp::Sigmoid => sigmoid,
            UnaryOp::Tanh => f64::tanh,
            UnaryOp::Gelu => gelu,
        };
        let t = self.value(x);
        let value = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect())
            .expect("unary op preserves shape");
        let rg = self.rg(x);
        self.push(value, Op::Unary(op, x), rg)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.unary(UnaryOp::Neg, x)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(UnaryOp::Exp, x)
    }

    /// Natural log; inputs must be positive.
    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(UnaryOp::Ln, x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(UnaryOp::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(UnaryOp::Tanh, x)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(UnaryOp::Gelu, x)
    }

    /// Multiplies by a constant.
    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let t = self.value(x);
        let value = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| v * factor).collect())
            .expect("scale preserves shape");
        let rg = self.rg(x);
        self.push(value, Op::Scale(x, factor), rg)
    }

    /// Adds a constant.
    pub fn offset(&mut self, x: Var, shift: f64) -> Var {
        let t = self.value(x);
        let value = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| v + shift).collect())
            .expect("offset preserves shape");
        let rg = self.rg(x);
        self.push(value, Op::Offset(x), rg)
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let t = self.value(x);
        let value = Tensor::new(
            t.shape().to_vec(),
            t.data().iter().map(|&v| v.clamp(lo, hi)).collect(),
        )
        .expect("clamp preserves shape");
        let rg = self.rg(x);
        self.push(value, Op::Clamp(x, lo, hi), rg)
    }

    // ---- linear algebra ------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let (m, k, p) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let value = Tensor::matrix(m, p, matmul_raw(ta.data(), tb.data(), m, k, p))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.rank() != 2 {
            return Err(TensorError::RankMismatch {
                op: "transpose",
                expected: 2,
                shape: t.shape().to_vec(),
            });
        }
        let (r, c) = (t.shape()[0], t.shape()[1]);
        let value = Tensor::matrix(c, r, transpose_raw(t.data(), r, c))?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Transpose(x), rg))
    }

    /// Adds a length-`cols` bias vector to every row of a matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        if tx.rank() != 2 || tb.rank() != 1 || tb.len() != tx.cols() {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias",
                left: tx.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let cols = tx.cols();
        let data = tx
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + tb.data()[i % cols])
            .collect();
        let value = Tensor::new(tx.shape().to_vec(), data)?;
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(value, Op::AddBias(x, bias), rg))
    }

    // ---- reductions ----------------------------------------------------

    /// Reduces every element to a rank-0 tensor.
    pub fn reduce(&mut self, op: Reduction, x: Var) -> Var {
        let t = self.value(x);
        let s: f64 = t.data().iter().sum();
        let v = match op {
            Reduction::Sum => s,
            Reduction::Mean => s / t.len() as f64,
        };
        let rg = self.rg(x);
        self.push(Tensor::scalar(v), Op::Reduce(op, x), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        self.reduce(Reduction::Sum, x)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        self.reduce(Reduction::Mean, x)
    }

    /// Reduces along one axis, dropping it.
    pub fn reduce_axis(&mut self, op: Reduction, x: Var, axis: usize) -> Result<Var> {
        let t = self.value(x);
        if axis >= t.rank() {
            return Err(TensorError::AxisOutOfRange {
                axis,
                rank: t.rank(),
            });
        }
        if t.rank() == 1 {
            let v = self.reduce(op, x);
            // keep the op tag so gradients use the same path
            return Ok(v);
        }
        let (r, c) = (t.shape()[0], t.shape()[1]);
        let (out_len, count) = if axis == 0 { (c, r) } else { (r, c) };
        let mut out = vec![0.0; out_len];
        for i in 0..r {
            for j in 0..c {
                let v = t.data()[i * c + j];
                if axis == 0 {
                    out[j] += v;
                } else {
                    out[i] += v;
                }
            }
        }
        if op == Reduction::Mean {
            out.iter_mut().for_each(|v| *v /= count as f64);
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::vector(out), Op::ReduceAxis(op, x, axis), rg))
    }

    // ---- neural-network primitives -----------------------------------

    /// Softmax over the last axis of a matrix (or over a vector).
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let c = t.cols();
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(c) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                z += *v;
            }
            row.iter_mut().for_each(|v| *v /= z);
        }
        let value = Tensor::new(t.shape().to_vec(), data).expect("softmax preserves shape");
        let rg = self.rg(x);
        self.push(value, Op::SoftmaxRows(x), rg)
    }

    /// Per-row normalization followed by elementwise gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let t = self.value(x);
        let (tg, tb) = (self.value(gamma), self.value(beta));
        let c = t.cols();
        if tg.shape() != [c] || tb.shape() != [c] || t.rank() == 0 {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                left: t.shape().to_vec(),
                right: tg.shape().to_vec(),
            });
        }
        let mut xhat = t.data().to_vec();
        let mut inv_std = Vec::with_capacity(t.rows());
        for row in xhat.chunks_mut(c) {
            let mu = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + eps).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mu) * inv);
            inv_std.push(inv);
        }
        let data = xhat
            .iter()
            .enumerate()
            .map(|(i, &v)| v * tg.data()[i % c] + tb.data()[i % c])
            .collect();
        let value = Tensor::new(t.shape().to_vec(), data)?;
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    // ---- indexing & structure -------------------------------------------

    /// Selects rows of a matrix, producing a `[indices.len(), cols]` matrix.
    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(x);
        if t.rank() != 2 {
            return Err(TensorError::RankMismatch {
                op: "gather_rows",
                expected: 2,
                shape: t.shape().to_vec(),
            });
        }
        if indices.is_empty() {
            return Err(TensorError::InvalidShape {
                shape: vec![0, t.cols()],
                len: 0,
            });
        }
        let c = t.cols();
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= t.rows() {
                return Err(TensorError::IndexOutOfRange {
                    op: "gather_rows",
                    index: i,
                    shape: t.shape().to_vec(),
                });
            }
            data.extend_from_slice(t.row(i));
        }
        let value = Tensor::matrix(indices.len(), c, data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::GatherRows(x, indices.to_vec()), rg))
    }

    /// Extracts one element (flat row-major index) as a rank-0 tensor.
    pub fn select(&mut self, x: Var, index: usize) -> Result<Var> {
        let t = self.value(x);
        if index >= t.len() {
            return Err(TensorError::IndexOutOfRange {
                op: "select",
                index,
                shape: t.shape().to_vec(),
            });
        }
        let value = Tensor::scalar(t.data()[index]);
        let rg = self.rg(x);
        Ok(self.push(value, Op::Select(x, index), rg))
    }

    /// Columns `start..start + len` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        if t.rank() != 2 || len == 0 || start + len > t.cols() {
            return Err(TensorError::IndexOutOfRange {
                op: "slice_cols",
                index: start + len,
                shape: t.shape().to_vec(),
            });
        }
        let mut data = Vec::with_capacity(t.rows() * len);
        for i in 0..t.rows() {
            data.extend_from_slice(&t.row(i)[start..start + len]);
        }
        let value = Tensor::matrix(t.rows(), len, data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::SliceCols(x, start), rg))
    }

    /// Concatenates matrices with equal row counts along the column axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.value(parts[0]);
        let rows = first.rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 2 || t.rows() != rows {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    left: first.shape().to_vec(),
                    right: t.shape().to_vec(),
                });
            }
            widths.push(t.cols());
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let value = Tensor::matrix(rows, total, data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Stacks equal-shaped scalars into a vector, or vectors into matrix rows.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.value(parts[0]).shape().to_vec();
        if first.len() > 1 {
            return Err(TensorError::RankMismatch {
                op: "stack",
                expected: 1,
                shape: first,
            });
        }
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.shape() != first.as_slice() {
                return Err(TensorError::ShapeMismatch {
                    op: "stack",
                    left: first,
                    right: t.shape().to_vec(),
                });
            }
            data.extend_from_slice(t.data());
        }
        let mut shape = vec![parts.len()];
        shape.extend_from_slice(&first);
        let value = Tensor::new(shape, data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::Stack(parts.to_vec()), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(x).reshaped(shape)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// Cosine similarity of two equal-length vectors, clamped to `[-1, 1]`.
    pub fn cosine_similarity(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 1 || ta.shape() != tb.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "cosine_similarity",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let na = dot(ta.data(), ta.data()).sqrt();
        let nb = dot(tb.data(), tb.data()).sqrt();
        for norm in [na, nb] {
            if norm < NORM_EPSILON || !norm.is_finite() {
                return Err(TensorError::DegenerateVector {
                    op: "cosine_similarity",
                    norm,
                });
            }
        }
        let cos = (dot(ta.data(), tb.data()) / (na * nb)).clamp(-1.0, 1.0);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::scalar(cos), Op::Cosine(a, b), rg))
    }

    // ---- backward --------------------------------------------------------

    /// Back-propagates from a rank-0 (or one-element) `loss`.
    ///
    /// Gradients are added to whatever the trainable leaves already hold.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.shape(loss);
        if self.value(loss).len() != 1 {
            return Err(TensorError::NonScalarLoss(shape.to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                let slot = &mut self.nodes[idx].grad;
                match slot {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    None => *slot = Some(g),
                }
                continue;
            }
            self.propagate(idx, &g, &mut grads);
        }
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(g),
        }
    }

    /// Gradient w.r.t. a binary operand, summing when the operand was a broadcast scalar.
    fn fold_to(&self, v: Var, g: Vec<f64>) -> Vec<f64> {
        if self.value(v).len() == g.len() {
            g
        } else {
            vec![g.iter().sum()]
        }
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Binary(op, a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let at = |t: &Tensor, i: usize| if t.len() == 1 { t.data()[0] } else { t.data()[i] };
                let (ga, gb): (Vec<f64>, Vec<f64>) = match op {
                    BinaryOp::Add => (g.to_vec(), g.to_vec()),
                    BinaryOp::Sub => (g.to_vec(), g.iter().map(|v| -v).collect()),
                    BinaryOp::Mul => (
                        g.iter().enumerate().map(|(i, v)| v * at(tb, i)).collect(),
                        g.iter().enumerate().map(|(i, v)| v * at(ta, i)).collect(),
                    ),
                };
                let ga = self.fold_to(*a, ga);
                let gb = self.fold_to(*b, gb);
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::Unary(op, x) => {
                let xs = self.value(*x).data();
                let gx: Vec<f64> = match op {
                    UnaryOp::Neg => g.iter().map(|v| -v).collect(),
                    UnaryOp::Exp => g.iter().zip(out).map(|(v, y)| v * y).collect(),
                    UnaryOp::Ln => g.iter().zip(xs).map(|(v, x)| v / x).collect(),
                    UnaryOp::Sigmoid => g.iter().zip(out).map(|(v, y)| v * y * (1.0 - y)).collect(),
                    UnaryOp::Tanh => g.iter().zip(out).map(|(v, y)| v * (1.0 - y * y)).collect(),
                    UnaryOp::Gelu => g.iter().zip(xs).map(|(v, &x)| v * gelu_grad(x)).collect(),
                };
                self.accumulate(grads, *x, gx);
            }
            Op::Scale(x, f) => self.accumulate(grads, *x, g.iter().map(|v| v * f).collect()),
            Op::Offset(x) => self.accumulate(grads, *x, g.to_vec()),
            Op::Clamp(x, lo, hi) => {
                let xs = self.value(*x).data();
                let gx = g
                    .iter()
                    .zip(xs)
                    .map(|(v, x)| if x < lo || x > hi { 0.0 } else { *v })
                    .collect();
                self.accumulate(grads, *x, gx);
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, p) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if self.rg(*a) {
                    let bt = transpose_raw(tb.data(), k, p);
                    self.accumulate(grads, *a, matmul_raw(g, &bt, m, p, k));
                }
                if self.rg(*b) {
                    let at = transpose_raw(ta.data(), m, k);
                    self.accumulate(grads, *b, matmul_raw(&at, g, k, m, p));
                }
            }
            Op::Transpose(x) => {
                let (r, c) = as_matrix(self.shape(*x));
                self.accumulate(grads, *x, transpose_raw(g, c, r));
            }
            Op::AddBias(x, b) => {
                let c = self.value(*b).len();
                let mut gb = vec![0.0; c];
                for (i, v) in g.iter().enumerate() {
                    gb[i % c] += v;
                }
                self.accumulate(grads, *x, g.to_vec());
                self.accumulate(grads, *b, gb);
            }
            Op::Reduce(op, x) => {
                let n = self.value(*x).len();
                let v = match op {
                    Reduction::Sum => g[0],
                    Reduction::Mean => g[0] / n as f64,
                };
                self.accumulate(grads, *x, vec![v; n]);
            }
            Op::ReduceAxis(op, x, axis) => {
                let (r, c) = as_matrix(self.shape(*x));
                let count = if *axis == 0 { r } else { c } as f64;
                let mut gx = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        let v = if *axis == 0 { g[j] } else { g[i] };
                        gx[i * c + j] = match op {
                            Reduction::Sum => v,
                            Reduction::Mean => v / count,
                        };
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::SoftmaxRows(x) => {
                let c = node.value.cols();
                let mut gx = vec![0.0; g.len()];
                for ((gr, yr), out_r) in g.chunks(c).zip(out.chunks(c)).zip(gx.chunks_mut(c)) {
                    let s = dot(gr, yr);
                    for ((o, gv), yv) in out_r.iter_mut().zip(gr).zip(yr) {
                        *o = yv * (gv - s);
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let tg = self.value(*gamma).data();
                let c = tg.len();
                let mut ggamma = vec![0.0; c];
                let mut gbeta = vec![0.0; c];
                let mut gx = vec![0.0; g.len()];
                for (row, inv) in inv_std.iter().enumerate() {
                    let gr = &g[row * c..(row + 1) * c];
                    let xr = &xhat[row * c..(row + 1) * c];
                    let dxhat: Vec<f64> = gr.iter().zip(tg).map(|(a, b)| a * b).collect();
                    let sum_d: f64 = dxhat.iter().sum();
                    let sum_dx: f64 = dot(&dxhat, xr);
                    for j in 0..c {
                        ggamma[j] += gr[j] * xr[j];
                        gbeta[j] += gr[j];
                        gx[row * c + j] =
                            inv / c as f64 * (c as f64 * dxhat[j] - sum_d - xr[j] * sum_dx);
                    }
                }
                self.accumulate(grads, *x, gx);
                self.accumulate(grads, *gamma, ggamma);
                self.accumulate(grads, *beta, gbeta);
            }
            Op::GatherRows(x, indices) => {
                let t = self.value(*x);
                let c = t.cols();
                let mut gx = vec![0.0; t.len()];
                for (k, &i) in indices.iter().enumerate() {
                    for j in 0..c {
                        gx[i * c + j] += g[k * c + j];
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Select(x, index) => {
                let mut gx = vec![0.0; self.value(*x).len()];
                gx[*index] = g[0];
                self.accumulate(grads, *x, gx);
            }
            Op::SliceCols(x, start) => {
                let t = self.value(*x);
                let (r, c) = (t.rows(), t.cols());
                let len = node.value.cols();
                let mut gx = vec![0.0; r * c];
                for i in 0..r {
                    gx[i * c + start..i * c + start + len].copy_from_slice(&g[i * len..(i + 1) * len]);
                }
                self.accumulate(grads, *x, gx);
            }
            Op::ConcatCols(parts) => {
                let rows = node.value.rows();
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    let mut gp = Vec::with_capacity(rows * w);
                    for i in 0..rows {
                        gp.extend_from_slice(&g[i * total + offset..i * total + offset + w]);
                    }
                    self.accumulate(grads, p, gp);
                    offset += w;
                }
            }
            Op::Stack(parts) => {
                let w = self.value(parts[0]).len();
                for (k, &p) in parts.iter().enumerate() {
                    self.accumulate(grads, p, g[k * w..(k + 1) * w].to_vec());
                }
            }
            Op::Reshape(x) => self.accumulate(grads, *x, g.to_vec()),
            Op::Cosine(a, b) => {
                let (ta, tb) = (self.value(*a).data(), self.value(*b).data());
                let na = dot(ta, ta).sqrt();
                let nb = dot(tb, tb).sqrt();
                let cos = dot(ta, tb) / (na * nb);
                let ga = ta
                    .iter()
                    .zip(tb)
                    .map(|(x, y)| g[0] * (y / (na * nb) - cos * x / (na * na)))
                    .collect();
                let gb = ta
                    .iter()
                    .zip(tb)
                    .map(|(x, y)| g[0] * (x / (na * nb) - cos * y / (nb * nb)))
                    .collect();
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn mat(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    /// Central finite-difference gradient of `f` at `x`.
    fn numeric_grad(x: &Tensor, f: &dyn Fn(&mut Graph, Var) -> Var) -> Vec<f64> {
        let h = 1e-5;
        (0..x.len())
            .map(|i| {
                let eval = |delta: f64| {
                    let mut t = x.clone();
                    t.data_mut()[i] += delta;
                    let mut g = Graph::new();
                    let v = g.param(t);
                    let out = f(&mut g, v);
                    g.item(out)
                };
                (eval(h) - eval(-h)) / (2.0 * h)
            })
            .collect()
    }

    fn check_grad(x: Tensor, f: &dyn Fn(&mut Graph, Var) -> Var) {
        let mut g = Graph::new();
        let v = g.param(x.clone());
        let out = f(&mut g, v);
        g.backward(out).unwrap();
        let analytic = g.grad(v).unwrap().to_vec();
        let numeric = numeric_grad(&x, f);
        for (a, n) in analytic.iter().zip(&numeric) {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-4);
            assert!(rel < 1e-4, "analytic {a} numeric {n}");
        }
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let mut g = Graph::new();
        let i2 = g.constant(mat(&[vec![1.0, 0.0], vec![0.0, 1.0]]));
        let a = g.constant(mat(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let p = g.matmul(i2, a).unwrap();
        assert_eq!(g.value(p).data(), &[1.0, 2.0, 3.0, 4.0]);

        let b = g.constant(mat(&[vec![5.0], vec![6.0]]));
        let p = g.matmul(a, b).unwrap();
        assert_eq!(g.value(p).shape(), &[2, 1]);
        assert_eq!(g.value(p).data(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        assert_eq!(
            err,
            TensorError::ShapeMismatch {
                op: "matmul",
                left: vec![2, 3],
                right: vec![2, 3]
            }
        );
        assert!(err.to_string().contains("[2, 3] vs [2, 3]"));
    }

    #[test]
    fn elementwise_examples() {
        let mut g = Graph::new();
        let z = g.constant(Tensor::vector(vec![0.0]));
        let e = g.exp(z);
        assert_eq!(g.value(e).data(), &[1.0]);

        let a = g.constant(Tensor::vector(vec![1.0, 2.0]));
        let b = g.constant(Tensor::vector(vec![3.0, 4.0]));
        let s = g.add(a, b).unwrap();
        assert_eq!(g.value(s).data(), &[4.0, 6.0]);

        let m = g.constant(Tensor::vector(vec![-0.7]));
        let e = g.exp(m);
        assert_abs_diff_eq!(g.value(e).data()[0], 0.4966, epsilon = 5e-5);

        let c = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        assert!(g.add(a, c).is_err());
        let two = g.scalar(2.0);
        let d = g.mul(c, two).unwrap();
        assert_eq!(g.value(d).data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn sigmoid_examples() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![0.0]));
        let s = g.sigmoid(x);
        assert_eq!(g.value(s).data(), &[0.5]);
        let l = g.sum(s);
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[0.25]);

        let big = g.constant(Tensor::vector(vec![1e3, -1e3]));
        let s = g.sigmoid(big);
        assert!((g.value(s).data()[0] - 1.0).abs() < 1e-12);
        assert!(g.value(s).data()[1] > 0.0 || g.value(s).data()[1] == 0.0);
        assert!(g.value(s).all_finite());
    }

    #[test]
    fn cosine_examples() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::vector(vec![0.3, -1.2, 2.0]));
        let c = g.cosine_similarity(a, a).unwrap();
        assert_abs_diff_eq!(g.item(c), 1.0, epsilon = 1e-12);

        let x = g.constant(Tensor::vector(vec![1.0, 0.0]));
        let y = g.constant(Tensor::vector(vec![0.0, 1.0]));
        let nx = g.constant(Tensor::vector(vec![-1.0, 0.0]));
        let c = g.cosine_similarity(x, y).unwrap();
        assert_eq!(g.item(c), 0.0);
        let c = g.cosine_similarity(x, nx).unwrap();
        assert_eq!(g.item(c), -1.0);

        let zero = g.constant(Tensor::vector(vec![0.0, 0.0]));
        assert!(matches!(
            g.cosine_similarity(x, zero),
            Err(TensorError::DegenerateVector { .. })
        ));
    }

    #[test]
    fn reduce_examples() {
        let mut g = Graph::new();
        let v = g.constant(Tensor::vector(vec![2.0, 4.0, 6.0]));
        let m = g.mean(v);
        assert_eq!(g.item(m), 4.0);

        let a = g.constant(mat(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let s = g.reduce_axis(Reduction::Sum, a, 0).unwrap();
        assert_eq!(g.value(s).data(), &[4.0, 6.0]);
        let s = g.reduce_axis(Reduction::Sum, a, 1).unwrap();
        assert_eq!(g.value(s).data(), &[3.0, 7.0]);

        let one = g.constant(Tensor::vector(vec![7.5]));
        let m = g.mean(one);
        assert_eq!(g.item(m), 7.5);

        assert!(matches!(
            g.reduce_axis(Reduction::Mean, a, 2),
            Err(TensorError::AxisOutOfRange { axis: 2, rank: 2 })
        ));
    }

    #[test]
    fn backward_of_sum_is_all_ones() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros(&[3, 2]));
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn backward_accumulates_until_zeroed() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        let s = g.sum(x);
        g.backward(s).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0, 2.0]);
        g.zero_grad();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        assert_eq!(g.backward(x), Err(TensorError::NonScalarLoss(vec![2])));
    }

    #[test]
    fn sigmoid_of_dot_at_zero_weights() {
        // loss = sigmoid(w . x) with w = 0 gives dloss/dw = 0.25 x
        let xs = Tensor::matrix(3, 1, vec![0.5, -1.5, 2.0]).unwrap();
        let mut g = Graph::new();
        let w = g.param(Tensor::zeros(&[1, 3]));
        let x = g.constant(xs.clone());
        let z = g.matmul(w, x).unwrap();
        let s = g.sigmoid(z);
        let l = g.sum(s);
        g.backward(l).unwrap();
        let expected: Vec<f64> = xs.data().iter().map(|v| 0.25 * v).collect();
        assert_eq!(g.grad(w).unwrap(), expected.as_slice());
    }

    #[test]
    fn finite_differences_per_op() {
        let x = mat(&[vec![0.3, -0.8, 1.1], vec![-0.4, 0.9, 0.2]]);
        let w = mat(&[vec![0.5, -0.2], vec![0.1, 0.7], vec![-0.6, 0.3]]);
        check_grad(x.clone(), &|g, v| {
            let w = g.constant(w.clone());
            let m = g.matmul(v, w).unwrap();
            let t = g.tanh(m);
            g.sum(t)
        });
        check_grad(x.clone(), &|g, v| {
            let e = g.exp(v);
            let s = g.sigmoid(e);
            let q = g.mul(s, v).unwrap();
            g.mean(q)
        });
        check_grad(x.clone(), &|g, v| {
            let s = g.softmax_rows(v);
            let k = g.constant(mat(&[vec![1.0, -2.0, 0.5], vec![0.3, 0.4, -1.0]]));
            let p = g.mul(s, k).unwrap();
            g.sum(p)
        });
        check_grad(x.clone(), &|g, v| {
            let gamma = g.constant(Tensor::vector(vec![1.2, 0.7, -0.4]));
            let beta = g.constant(Tensor::vector(vec![0.1, 0.0, -0.3]));
            let y = g.layer_norm(v, gamma, beta, 1e-5).unwrap();
            let k = g.constant(mat(&[vec![1.0, -2.0, 0.5], vec![0.3, 0.4, -1.0]]));
            let p = g.mul(y, k).unwrap();
            g.sum(p)
        });
        check_grad(x.clone(), &|g, v| {
            let a = g.slice_cols(v, 0, 2).unwrap();
            let b = g.slice_cols(v, 1, 2).unwrap();
            let c = g.concat_cols(&[b, a]).unwrap();
            let r = g.gather_rows(c, &[1, 0, 1]).unwrap();
            let m = g.reduce_axis(Reduction::Mean, r, 0).unwrap();
            let gl = g.gelu(m);
            let t = g.transpose(r).unwrap();
            let s = g.sum(t);
            let sg = g.sum(gl);
            let q = g.mul(s, sg).unwrap();
            g.offset(q, 1.0)
        });
        check_grad(Tensor::vector(vec![0.4, -1.3, 0.8]), &|g, v| {
            let b = g.constant(Tensor::vector(vec![1.0, 0.5, -0.2]));
            g.cosine_similarity(v, b).unwrap()
        });
        check_grad(Tensor::vector(vec![0.4, -1.3, 0.8]), &|g, v| {
            let e0 = g.select(v, 0).unwrap();
            let e2 = g.select(v, 2).unwrap();
            let d = g.sub(e0, e2).unwrap();
            let st = g.stack(&[d, e0, e2]).unwrap();
            let sc = g.scale(st, 3.0);
            let ex = g.exp(sc);
            let sq = g.sigmoid(ex);
            let ln = g.ln(sq);
            let ng = g.neg(ln);
            g.sum(ng)
        });
        check_grad(x, &|g, v| {
            let b = g.constant(Tensor::vector(vec![0.15, -0.1, 0.05]));
            let y = g.add_bias(v, b).unwrap();
            let r = g.reshape(y, vec![6]).unwrap();
            let c = g.clamp(r, -0.5, 0.5);
            let q = g.mul(c, r).unwrap();
            g.sum(q)
        });
    }

    #[test]
    fn scalar_broadcast_gradient_sums() {
        let mut g = Graph::new();
        let s = g.param(Tensor::scalar(2.0));
        let v = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let p = g.mul(v, s).unwrap();
        let l = g.sum(p);
        g.backward(l).unwrap();
        assert_eq!(g.grad(s).unwrap(), &[6.0]);
    }
}
