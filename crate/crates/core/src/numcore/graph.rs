//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a node holding its forward value. Nodes are only
//! ever appended, so inputs always precede the node that consumes them and a
//! reverse scan of the tape is a valid topological order for backward.

use std::borrow::Cow;

use rand::Rng;

use super::tensor::{matmul_into, matmul_nt_acc, matmul_tn_acc, Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding on both sides so the output keeps the input length.
    Same,
    /// No padding; output length is `len - width + 1`.
    Valid,
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    MulConst(Var, Vec<T>),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Gelu(Var),
    Gather { table: Var, ids: Vec<usize> },
    SliceRows { src: Var, start: usize },
    SliceCols { src: Var, start: usize },
    ConcatCols(Vec<Var>),
    StackRows(Vec<Var>),
    Transpose(Var),
    Softmax { src: Var },
    LayerNorm { src: Var, gain: Var, bias: Var, normed: Vec<T>, rstd: Vec<T> },
    Conv1d { input: Var, kernel: Var, pad: usize },
    MaxPoolRows { src: Var, argmax: Vec<usize> },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<T> },
    Sum(Var),
}

struct Node<'a, T: Scalar> {
    value: Cow<'a, Tensor<T>>,
    op: Op<T>,
    trainable: bool,
    needs_grad: bool,
}

/// A recorded computation. Leaves may borrow their values, so binding a
/// model's parameters does not copy them.
pub struct Graph<'a, T: Scalar> {
    nodes: Vec<Node<'a, T>>,
}

impl<T: Scalar> Default for Graph<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients for every trainable leaf, in leaf creation order.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    entries: Vec<(Var, Tensor<T>)>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(v, _)| *v == var).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, &Tensor<T>)> {
        self.entries.iter().map(|(v, t)| (*v, t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn into_tensors(self) -> Vec<Tensor<T>> {
        self.entries.into_iter().map(|(_, t)| t).collect()
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu<T: Scalar>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    let half = T::of(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    let half = T::of(0.5);
    let three = T::of(3.0);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + three * a * x * x)
}

impl<'a, T: Scalar> Graph<'a, T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
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

    fn dims(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.dims()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|i| self.nodes[i.0].needs_grad);
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            trainable: false,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn leaf(&mut self, value: Cow<'a, Tensor<T>>, trainable: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            trainable,
            needs_grad: trainable,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf owning its value.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(Cow::Owned(value), true)
    }

    /// Trainable leaf borrowing its value.
    pub fn param_ref(&mut self, value: &'a Tensor<T>) -> Var {
        self.leaf(Cow::Borrowed(value), true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(Cow::Owned(value), false)
    }

    pub fn constant_ref(&mut self, value: &'a Tensor<T>) -> Var {
        self.leaf(Cow::Borrowed(value), false)
    }

    fn matrix_dims(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        let d = self.dims(v);
        if d.len() != 2 {
            return Err(Error::shape(op, d, &[]));
        }
        Ok((d[0], d[1]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims("matmul", a)?;
        let (k2, n) = self.matrix_dims("matmul", b)?;
        if k != k2 {
            return Err(Error::shape("matmul", self.dims(a), self.dims(b)));
        }
        let mut out = vec![T::zero(); m * n];
        matmul_into(self.value(a).values(), self.value(b).values(), &mut out, m, k, n);
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(t, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.dims(a) != self.dims(b) {
            return Err(Error::shape("add", self.dims(a), self.dims(b)));
        }
        let mut t = self.value(a).clone();
        t.add_assign(self.value(b));
        Ok(self.push(t, Op::Add(a, b), &[a, b]))
    }

    /// Adds a length-`n` vector to every row of an `m×n` matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (_, n) = self.matrix_dims("add_row", x)?;
        if self.value(row).numel() != n {
            return Err(Error::shape("add_row", self.dims(x), self.dims(row)));
        }
        let mut t = self.value(x).clone();
        let b = self.value(row).values().to_vec();
        for chunk in t.values_mut().chunks_mut(n) {
            for (v, &bv) in chunk.iter_mut().zip(&b) {
                *v = *v + bv;
            }
        }
        Ok(self.push(t, Op::AddRow(x, row), &[x, row]))
    }

    /// `x · w + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_row(y, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.dims(a) != self.dims(b) {
            return Err(Error::shape("mul", self.dims(a), self.dims(b)));
        }
        let values = self
            .value(a)
            .values()
            .iter()
            .zip(self.value(b).values())
            .map(|(&x, &y)| x * y)
            .collect();
        let t = Tensor::new(self.dims(a).to_vec(), values)?;
        Ok(self.push(t, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, x: Var, k: T) -> Var {
        let t = self.value(x).map(|v| v * k);
        self.push(t, Op::Scale(x, k), &[x])
    }

    /// Elementwise product with a constant tensor of the same shape.
    pub fn mul_const(&mut self, x: Var, factors: Vec<T>) -> Result<Var> {
        if factors.len() != self.value(x).numel() {
            return Err(Error::shape("mul_const", self.dims(x), &[factors.len()]));
        }
        let values = self
            .value(x)
            .values()
            .iter()
            .zip(&factors)
            .map(|(&v, &f)| v * f)
            .collect();
        let t = Tensor::new(self.dims(x).to_vec(), values)?;
        Ok(self.push(t, Op::MulConst(x, factors), &[x]))
    }

    /// Inverted dropout: zero each element with probability `rate` and scale
    /// survivors by `1 / (1 - rate)`. Pass `None` for evaluation.
    pub fn dropout<R: Rng>(&mut self, x: Var, rate: f64, rng: Option<&mut R>) -> Result<Var> {
        let Some(rng) = rng else { return Ok(x) };
        if rate <= 0.0 {
            return Ok(x);
        }
        let keep = T::of(1.0 / (1.0 - rate));
        let factors = (0..self.value(x).numel())
            .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
            .collect();
        self.mul_const(x, factors)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.value(x).map(sigmoid);
        self.push(t, Op::Sigmoid(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| v.tanh());
        self.push(t, Op::Tanh(x), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(t, Op::Relu(x), &[x])
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(gelu);
        self.push(t, Op::Gelu(x), &[x])
    }

    /// Row lookup: output row `r` is `table[ids[r]]`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = self.matrix_dims("gather_rows", table)?;
        if ids.is_empty() {
            return Err(Error::Tensor("gather_rows needs at least one id".into()));
        }
        let src = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(Error::Tensor(format!("row id {id} outside table of {v} rows")));
            }
            out.extend_from_slice(src.row(id));
        }
        let t = Tensor::new(vec![ids.len(), d], out)?;
        Ok(self.push(t, Op::Gather { table, ids: ids.to_vec() }, &[table]))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.matrix_dims("slice_rows", x)?;
        if len == 0 || start + len > m {
            return Err(Error::Tensor(format!("rows {start}..{} outside {m} rows", start + len)));
        }
        let values = self.value(x).values()[start * n..(start + len) * n].to_vec();
        let t = Tensor::new(vec![len, n], values)?;
        Ok(self.push(t, Op::SliceRows { src: x, start }, &[x]))
    }

    pub fn row(&mut self, x: Var, index: usize) -> Result<Var> {
        self.slice_rows(x, index, 1)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.matrix_dims("slice_cols", x)?;
        if len == 0 || start + len > n {
            return Err(Error::Tensor(format!("cols {start}..{} outside {n} cols", start + len)));
        }
        let src = self.value(x);
        let mut values = Vec::with_capacity(m * len);
        for r in 0..m {
            values.extend_from_slice(&src.row(r)[start..start + len]);
        }
        let t = Tensor::new(vec![m, len], values)?;
        Ok(self.push(t, Op::SliceCols { src: x, start }, &[x]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::Tensor("concat of nothing".into()))?;
        let (m, _) = self.matrix_dims("concat_cols", first)?;
        let mut total = 0;
        for &p in parts {
            let (pm, pn) = self.matrix_dims("concat_cols", p)?;
            if pm != m {
                return Err(Error::shape("concat_cols", self.dims(first), self.dims(p)));
            }
            total += pn;
        }
        let mut values = Vec::with_capacity(m * total);
        for r in 0..m {
            for &p in parts {
                values.extend_from_slice(self.value(p).row(r));
            }
        }
        let t = Tensor::new(vec![m, total], values)?;
        Ok(self.push(t, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::Tensor("stack of nothing".into()))?;
        let (_, n) = self.matrix_dims("stack_rows", first)?;
        let mut rows = 0;
        for &p in parts {
            let (pm, pn) = self.matrix_dims("stack_rows", p)?;
            if pn != n {
                return Err(Error::shape("stack_rows", self.dims(first), self.dims(p)));
            }
            rows += pm;
        }
        let mut values = Vec::with_capacity(rows * n);
        for &p in parts {
            values.extend_from_slice(self.value(p).values());
        }
        let t = Tensor::new(vec![rows, n], values)?;
        Ok(self.push(t, Op::StackRows(parts.to_vec()), parts))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims("transpose", x)?;
        let src = self.value(x).values();
        let mut values = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                values[j * m + i] = src[i * n + j];
            }
        }
        let t = Tensor::new(vec![n, m], values)?;
        Ok(self.push(t, Op::Transpose(x), &[x]))
    }

    /// Row-wise softmax over the last axis. `mask` is either the same shape
    /// as `x` or a single row broadcast to every row; zero entries get
    /// probability exactly zero and their logits are never read.
    pub fn softmax(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let t = softmax_rows(self.value(x), mask)?;
        Ok(self.push(t, Op::Softmax { src: x }, &[x]))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (m, n) = self.matrix_dims("layer_norm", x)?;
        if self.value(gain).numel() != n {
            return Err(Error::shape("layer_norm", self.dims(x), self.dims(gain)));
        }
        if self.value(bias).numel() != n {
            return Err(Error::shape("layer_norm", self.dims(x), self.dims(bias)));
        }
        let eps = T::of(eps);
        let nf = T::of(n as f64);
        let src = self.value(x);
        let g = self.value(gain).values();
        let b = self.value(bias).values();
        let mut normed = Vec::with_capacity(m * n);
        let mut rstd = Vec::with_capacity(m);
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            let row = src.row(r);
            let mean = row.iter().copied().sum::<T>() / nf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
            let rs = T::one() / (var + eps).sqrt();
            rstd.push(rs);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * rs;
                normed.push(h);
                out.push(h * g[j] + b[j]);
            }
        }
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(
            t,
            Op::LayerNorm { src: x, gain, bias, normed, rstd },
            &[x, gain, bias],
        ))
    }

    /// 1-D convolution over the row axis. `kernel` has dims
    /// `[width, d_in, d_out]`; output row `t` is
    /// `Σ_k input[t + k - pad] · kernel[k]`.
    pub fn conv1d(&mut self, input: Var, kernel: Var, padding: Padding) -> Result<Var> {
        let (len, d_in) = self.matrix_dims("conv1d", input)?;
        let kd = self.dims(kernel).to_vec();
        if kd.len() != 3 || kd[1] != d_in {
            return Err(Error::shape("conv1d", self.dims(input), &kd));
        }
        let (w, d_out) = (kd[0], kd[2]);
        let pad = match padding {
            Padding::Same => {
                if w % 2 == 0 {
                    return Err(Error::Tensor(format!("same padding needs an odd width, got {w}")));
                }
                (w - 1) / 2
            }
            Padding::Valid => {
                if len < w {
                    return Err(Error::Tensor(format!("valid conv needs len >= {w}, got {len}")));
                }
                0
            }
        };
        let out_len = len + 2 * pad - w + 1;
        let mut out = vec![T::zero(); out_len * d_out];
        let x = self.value(input).values();
        let kv = self.value(kernel).values();
        for k in 0..w {
            let (t0, t1) = conv_rows(k, pad, len, out_len);
            if t0 >= t1 {
                continue;
            }
            let s0 = t0 + k - pad;
            matmul_into(
                &x[s0 * d_in..(s0 + t1 - t0) * d_in],
                &kv[k * d_in * d_out..(k + 1) * d_in * d_out],
                &mut out[t0 * d_out..t1 * d_out],
                t1 - t0,
                d_in,
                d_out,
            );
        }
        let t = Tensor::new(vec![out_len, d_out], out)?;
        Ok(self.push(t, Op::Conv1d { input, kernel, pad }, &[input, kernel]))
    }

    /// Column-wise maximum over rows whose `mask` entry is true (all rows
    /// when `mask` is `None`). Output is `1×d`.
    pub fn max_pool_rows(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let (m, n) = self.matrix_dims("max_pool_rows", x)?;
        if let Some(mask) = mask {
            if mask.len() != m {
                return Err(Error::shape("max_pool_rows", self.dims(x), &[mask.len()]));
            }
        }
        let keep = |r: usize| mask.is_none_or(|mk| mk[r]);
        let first = (0..m).find(|&r| keep(r)).ok_or(Error::AllMasked { row: 0 })?;
        let src = self.value(x);
        let mut argmax = vec![first; n];
        let mut out = src.row(first).to_vec();
        for r in (first + 1)..m {
            if !keep(r) {
                continue;
            }
            for (j, &v) in src.row(r).iter().enumerate() {
                if v > out[j] {
                    out[j] = v;
                    argmax[j] = r;
                }
            }
        }
        let t = Tensor::new(vec![1, n], out)?;
        Ok(self.push(t, Op::MaxPoolRows { src: x, argmax }, &[x]))
    }

    /// Mean over the batch of `-log softmax(logits)[target]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (b, c) = self.matrix_dims("cross_entropy", logits)?;
        if targets.len() != b {
            return Err(Error::shape("cross_entropy", self.dims(logits), &[targets.len()]));
        }
        for (index, &target) in targets.iter().enumerate() {
            if target >= c {
                return Err(Error::TargetOutOfRange { index, target, classes: c });
            }
        }
        let z = self.value(logits);
        let probs = softmax_rows(z, None)?.into_values();
        let mut loss = T::zero();
        for (r, &target) in targets.iter().enumerate() {
            let row = z.row(r);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
            loss = loss + (lse - row[target]);
        }
        loss = loss / T::of(b as f64);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy { logits, targets: targets.to_vec(), probs },
            &[logits],
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// Reverse pass from a scalar `loss`. Returns one gradient per trainable
    /// leaf, each with the leaf's dims.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let loss_value = self.value(loss);
        if loss_value.numel() != 1 {
            return Err(Error::NonScalarLoss(loss_value.dims().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            self.backprop_node(i, &dy, &mut grads);
        }

        let entries = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.trainable)
            .map(|(i, n)| {
                let values = grads
                    .get_mut(i)
                    .and_then(Option::take)
                    .unwrap_or_else(|| vec![T::zero(); n.value.numel()]);
                let t = Tensor::new(n.value.dims().to_vec(), values).expect("leaf dims");
                (Var(i), t)
            })
            .collect();
        Ok(Gradients { entries })
    }

    fn backprop_node(&self, i: usize, dy: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let y = node.value.values();
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [T])| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); self.nodes[v.0].value.numel()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.dims(*a)[0], self.dims(*a)[1]);
                let n = self.dims(*b)[1];
                let av = self.value(*a).values();
                let bv = self.value(*b).values();
                acc(*a, &mut |g| matmul_nt_acc(dy, bv, g, m, n, k));
                acc(*b, &mut |g| matmul_tn_acc(av, dy, g, m, k, n));
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    acc(v, &mut |g| add_into(g, dy));
                }
            }
            Op::AddRow(x, row) => {
                let n = self.value(*row).numel();
                acc(*x, &mut |g| add_into(g, dy));
                acc(*row, &mut |g| {
                    for chunk in dy.chunks(n) {
                        add_into(g, chunk);
                    }
                });
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).values();
                let bv = self.value(*b).values();
                acc(*a, &mut |g| {
                    for ((gv, &d), &o) in g.iter_mut().zip(dy).zip(bv) {
                        *gv = *gv + d * o;
                    }
                });
                acc(*b, &mut |g| {
                    for ((gv, &d), &o) in g.iter_mut().zip(dy).zip(av) {
                        *gv = *gv + d * o;
                    }
                });
            }
            Op::Scale(x, k) => acc(*x, &mut |g| {
                for (gv, &d) in g.iter_mut().zip(dy) {
                    *gv = *gv + d * *k;
                }
            }),
            Op::MulConst(x, factors) => acc(*x, &mut |g| {
                for ((gv, &d), &f) in g.iter_mut().zip(dy).zip(factors) {
                    *gv = *gv + d * f;
                }
            }),
            Op::Sigmoid(x) => acc(*x, &mut |g| {
                for ((gv, &d), &s) in g.iter_mut().zip(dy).zip(y) {
                    *gv = *gv + d * s * (T::one() - s);
                }
            }),
            Op::Tanh(x) => acc(*x, &mut |g| {
                for ((gv, &d), &t) in g.iter_mut().zip(dy).zip(y) {
                    *gv = *gv + d * (T::one() - t * t);
                }
            }),
            Op::Relu(x) => {
                let xv = self.value(*x).values();
                acc(*x, &mut |g| {
                    for ((gv, &d), &v) in g.iter_mut().zip(dy).zip(xv) {
                        if v > T::zero() {
                            *gv = *gv + d;
                        }
                    }
                })
            }
            Op::Gelu(x) => {
                let xv = self.value(*x).values();
                acc(*x, &mut |g| {
                    for ((gv, &d), &v) in g.iter_mut().zip(dy).zip(xv) {
                        *gv = *gv + d * gelu_grad(v);
                    }
                })
            }
            Op::Gather { table, ids } => {
                let d = self.dims(*table)[1];
                acc(*table, &mut |g| {
                    for (r, &id) in ids.iter().enumerate() {
                        add_into(&mut g[id * d..(id + 1) * d], &dy[r * d..(r + 1) * d]);
                    }
                })
            }
            Op::SliceRows { src, start } => {
                let n = self.dims(*src)[1];
                acc(*src, &mut |g| add_into(&mut g[start * n..start * n + dy.len()], dy));
            }
            Op::SliceCols { src, start } => {
                let n = self.dims(*src)[1];
                let len = node.value.cols();
                acc(*src, &mut |g| {
                    for (r, chunk) in dy.chunks(len).enumerate() {
                        add_into(&mut g[r * n + start..r * n + start + len], chunk);
                    }
                })
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let pn = self.dims(p)[1];
                    acc(p, &mut |g| {
                        for (r, chunk) in g.chunks_mut(pn).enumerate() {
                            add_into(chunk, &dy[r * total + offset..r * total + offset + pn]);
                        }
                    });
                    offset += pn;
                }
            }
            Op::StackRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).numel();
                    acc(p, &mut |g| add_into(g, &dy[offset..offset + len]));
                    offset += len;
                }
            }
            Op::Transpose(x) => {
                let (m, n) = (self.dims(*x)[0], self.dims(*x)[1]);
                acc(*x, &mut |g| {
                    for i in 0..m {
                        for j in 0..n {
                            g[i * n + j] = g[i * n + j] + dy[j * m + i];
                        }
                    }
                })
            }
            Op::Softmax { src } => {
                let n = node.value.cols();
                acc(*src, &mut |g| {
                    for ((gr, yr), dr) in g.chunks_mut(n).zip(y.chunks(n)).zip(dy.chunks(n)) {
                        let dot: T = yr.iter().zip(dr).map(|(&a, &b)| a * b).sum();
                        for ((gv, &yv), &dv) in gr.iter_mut().zip(yr).zip(dr) {
                            *gv = *gv + yv * (dv - dot);
                        }
                    }
                })
            }
            Op::LayerNorm { src, gain, bias, normed, rstd } => {
                let n = node.value.cols();
                let gv = self.value(*gain).values();
                let nf = T::of(n as f64);
                acc(*src, &mut |g| {
                    for (r, gr) in g.chunks_mut(n).enumerate() {
                        let dr = &dy[r * n..(r + 1) * n];
                        let hr = &normed[r * n..(r + 1) * n];
                        let mut mean_dh = T::zero();
                        let mut mean_dh_h = T::zero();
                        for j in 0..n {
                            let dh = dr[j] * gv[j];
                            mean_dh = mean_dh + dh;
                            mean_dh_h = mean_dh_h + dh * hr[j];
                        }
                        mean_dh = mean_dh / nf;
                        mean_dh_h = mean_dh_h / nf;
                        for j in 0..n {
                            let dh = dr[j] * gv[j];
                            gr[j] = gr[j] + rstd[r] * (dh - mean_dh - hr[j] * mean_dh_h);
                        }
                    }
                });
                acc(*gain, &mut |g| {
                    for (dr, hr) in dy.chunks(n).zip(normed.chunks(n)) {
                        for j in 0..n {
                            g[j] = g[j] + dr[j] * hr[j];
                        }
                    }
                });
                acc(*bias, &mut |g| {
                    for dr in dy.chunks(n) {
                        add_into(g, dr);
                    }
                });
            }
            Op::Conv1d { input, kernel, pad } => {
                let (len, d_in) = (self.dims(*input)[0], self.dims(*input)[1]);
                let kd = self.dims(*kernel);
                let (w, d_out) = (kd[0], kd[2]);
                let out_len = node.value.rows();
                let xv = self.value(*input).values();
                let kv = self.value(*kernel).values();
                acc(*input, &mut |g| {
                    for k in 0..w {
                        let (t0, t1) = conv_rows(k, *pad, len, out_len);
                        if t0 >= t1 {
                            continue;
                        }
                        let s0 = t0 + k - pad;
                        matmul_nt_acc(
                            &dy[t0 * d_out..t1 * d_out],
                            &kv[k * d_in * d_out..(k + 1) * d_in * d_out],
                            &mut g[s0 * d_in..(s0 + t1 - t0) * d_in],
                            t1 - t0,
                            d_out,
                            d_in,
                        );
                    }
                });
                acc(*kernel, &mut |g| {
                    for k in 0..w {
                        let (t0, t1) = conv_rows(k, *pad, len, out_len);
                        if t0 >= t1 {
                            continue;
                        }
                        let s0 = t0 + k - pad;
                        matmul_tn_acc(
                            &xv[s0 * d_in..(s0 + t1 - t0) * d_in],
                            &dy[t0 * d_out..t1 * d_out],
                            &mut g[k * d_in * d_out..(k + 1) * d_in * d_out],
                            t1 - t0,
                            d_in,
                            d_out,
                        );
                    }
                });
            }
            Op::MaxPoolRows { src, argmax } => {
                let n = argmax.len();
                acc(*src, &mut |g| {
                    for (j, &r) in argmax.iter().enumerate() {
                        g[r * n + j] = g[r * n + j] + dy[j];
                    }
                })
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let c = self.dims(*logits)[1];
                let scale = dy[0] / T::of(targets.len() as f64);
                acc(*logits, &mut |g| {
                    for (r, &t) in targets.iter().enumerate() {
                        for j in 0..c {
                            let onehot = if j == t { T::one() } else { T::zero() };
                            g[r * c + j] = g[r * c + j] + scale * (probs[r * c + j] - onehot);
                        }
                    }
                })
            }
            Op::Sum(x) => acc(*x, &mut |g| {
                for gv in g.iter_mut() {
                    *gv = *gv + dy[0];
                }
            }),
        }
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

/// Output rows `t0..t1` whose source row `t + k - pad` lies inside the input.
fn conv_rows(k: usize, pad: usize, len: usize, out_len: usize) -> (usize, usize) {
    let t0 = pad.saturating_sub(k);
    let t1 = (len + pad).saturating_sub(k).min(out_len);
    (t0, t1)
}

/// Masked, max-shifted row softmax over the last axis.
pub fn softmax_rows<T: Scalar>(x: &Tensor<T>, mask: Option<&[bool]>) -> Result<Tensor<T>> {
    let n = x.cols();
    let rows = x.rows();
    if let Some(mask) = mask {
        if mask.len() != n && mask.len() != n * rows {
            return Err(Error::shape("softmax", x.dims(), &[mask.len()]));
        }
    }
    let mut out = vec![T::zero(); x.numel()];
    for r in 0..rows {
        let keep = |j: usize| match mask {
            None => true,
            Some(m) if m.len() == n => m[j],
            Some(m) => m[r * n + j],
        };
        let row = x.row(r);
        let mut max = T::neg_infinity();
        for (j, &v) in row.iter().enumerate() {
            if keep(j) && v > max {
                max = v;
            }
        }
        if max == T::neg_infinity() {
            return Err(Error::AllMasked { row: r });
        }
        let o = &mut out[r * n..(r + 1) * n];
        let mut total = T::zero();
        for (j, &v) in row.iter().enumerate() {
            if keep(j) {
                let e = (v - max).exp();
                o[j] = e;
                total = total + e;
            }
        }
        for v in o.iter_mut() {
            *v = *v / total;
        }
    }
    Tensor::new(x.dims().to_vec(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Tensor<f64> {
        Tensor::from_rows(rows)
    }

    #[test]
    fn matmul_examples() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(m(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let id = g.constant(super::super::tensor::identity(2));
        let b = g.constant(m(&[&[5.0, 6.0], &[7.0, 8.0]]));
        let z = g.constant(m(&[&[0.0, 0.0], &[0.0, 0.0]]));
        let c1 = g.matmul(a, id).unwrap();
        let c2 = g.matmul(a, b).unwrap();
        let c3 = g.matmul(z, b).unwrap();
        assert_eq!(g.value(c1).values(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(g.value(c2).values(), &[19.0, 22.0, 43.0, 50.0]);
        assert!(g.value(c3).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_rejects_mismatch_naming_shapes() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]"), "{err}");
    }

    #[test]
    fn softmax_examples() {
        let eq = softmax_rows(&Tensor::<f64>::row_vector(&[0.7; 4]), None).unwrap();
        for &p in eq.values() {
            assert!((p - 0.25).abs() < 1e-15);
        }
        let two = softmax_rows(&Tensor::<f64>::row_vector(&[0.0, 2f64.ln()]), None).unwrap();
        assert!((two.values()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((two.values()[1] - 2.0 / 3.0).abs() < 1e-15);
        let masked =
            softmax_rows(&Tensor::<f64>::row_vector(&[5.0, 99.0]), Some(&[true, false])).unwrap();
        assert_eq!(masked.values(), &[1.0, 0.0]);
    }

    #[test]
    fn softmax_all_masked_is_an_error() {
        let t = Tensor::<f64>::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let err = softmax_rows(&t, Some(&[true, true, false, false])).unwrap_err();
        assert!(matches!(err, Error::AllMasked { row: 1 }));
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let t = Tensor::<f32>::row_vector(&[1000.0, 1000.0, -1000.0]);
        let p = softmax_rows(&t, None).unwrap();
        assert!(p.all_finite());
        assert!((p.values()[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn conv1d_examples() {
        let run = |kernel: [f64; 3], padding| {
            let mut g = Graph::<f64>::new();
            let x = g.constant(Tensor::new(vec![4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
            let k = g.constant(Tensor::new(vec![3, 1, 1], kernel.to_vec()).unwrap());
            let y = g.conv1d(x, k, padding).unwrap();
            g.value(y).values().to_vec()
        };
        assert_eq!(run([0.0, 1.0, 0.0], Padding::Same), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(run([1.0, 1.0, 1.0], Padding::Same), vec![3.0, 6.0, 9.0, 7.0]);
        assert_eq!(run([1.0, 1.0, 1.0], Padding::Valid), vec![6.0, 9.0]);
    }

    #[test]
    fn conv1d_rejects_bad_geometry() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(&[2, 1]));
        let k3 = g.constant(Tensor::zeros(&[3, 1, 1]));
        let k2 = g.constant(Tensor::zeros(&[2, 1, 1]));
        assert!(g.conv1d(x, k3, Padding::Valid).is_err());
        assert!(g.conv1d(x, k2, Padding::Same).is_err());
    }

    #[test]
    fn max_pool_matches_scan_and_respects_mask() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(m(&[&[1.0, 9.0], &[5.0, 2.0], &[7.0, 0.0]]));
        let all = g.max_pool_rows(x, None).unwrap();
        assert_eq!(g.value(all).values(), &[7.0, 9.0]);
        let some = g.max_pool_rows(x, Some(&[false, true, false])).unwrap();
        assert_eq!(g.value(some).values(), &[5.0, 2.0]);
        assert!(g.max_pool_rows(x, Some(&[false, false, false])).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let mut g = Graph::<f64>::new();
        let confident = g.constant(m(&[&[0.0, 50.0, 0.0]]));
        let l = g.cross_entropy(confident, &[1]).unwrap();
        assert!(g.value(l).values()[0] < 1e-20);

        let uniform = g.constant(m(&[&[0.3; 5]]));
        let l = g.cross_entropy(uniform, &[4]).unwrap();
        assert!((g.value(l).values()[0] - 5f64.ln()).abs() < 1e-14);

        let err = g.cross_entropy(uniform, &[5]).unwrap_err();
        assert!(matches!(err, Error::TargetOutOfRange { index: 0, target: 5, classes: 5 }));
    }

    #[test]
    fn backward_simple_cases() {
        let mut g = Graph::<f64>::new();
        let p = g.param(Tensor::row_vector(&[1.0, 2.0, 3.0]));
        let s = g.sum(p);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(p).unwrap().values(), &[1.0, 1.0, 1.0]);

        let mut g = Graph::<f64>::new();
        let p = g.param(Tensor::row_vector(&[1.0, 2.0, 3.0]));
        let sq = g.mul(p, p).unwrap();
        let s = g.sum(sq);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(p).unwrap().values(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::<f64>::new();
        let p = g.param(Tensor::row_vector(&[1.0, 2.0]));
        assert!(matches!(g.backward(p), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn unused_trainable_leaf_gets_zero_gradient() {
        let mut g = Graph::<f64>::new();
        let p = g.param(Tensor::row_vector(&[1.0]));
        let q = g.param(Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let s = g.sum(p);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.len(), 2);
        assert_eq!(grads.get(q).unwrap().dims(), &[2, 2]);
        assert!(grads.get(q).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inputs_precede_consumers() {
        let mut g = Graph::<f64>::new();
        let a = g.param(Tensor::row_vector(&[1.0, 2.0]));
        let b = g.tanh(a);
        let c = g.mul(a, b).unwrap();
        assert!(a < b && b < c);
    }

    #[test]
    fn dropout_scales_survivors() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::filled(&[1, 1000], 1.0));
        let y = g.dropout(x, 0.5, Some(&mut rng)).unwrap();
        let vals = g.value(y).values();
        assert!(vals.iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = vals.iter().filter(|&&v| v > 0.0).count();
        assert!((400..600).contains(&kept));
        let same = g.dropout::<rand_chacha::ChaCha8Rng>(x, 0.5, None).unwrap();
        assert_eq!(same, x);
    }
}
