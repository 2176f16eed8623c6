//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation as a node appended to a vector, so
//! node order is already a topological order. `backward` walks it once in
//! reverse and accumulates gradients additively into parents.

use alloc::vec;
use alloc::vec::Vec;

use super::attention::{
    autocorr_scores, delay_aggregate, select_delays, softmax_in_place, top_k_for,
};
use super::tensor::{matmul_into, numel};
use super::{NumericsError, Tensor};
use crate::math;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    Transpose(Var),
    Softmax(Var, usize),
    Normalize(Var),
    Gelu(Var),
    Sum(Var),
    Mean(Var),
    Mse(Var, Var),
    Concat(Vec<Var>, usize),
    /// input, axis, start, end
    Slice(Var, usize, usize, usize),
    Roll(Var, isize, usize),
    MovingAverage(Var, usize),
    AutoCorr {
        q: Var,
        k: Var,
        v: Var,
        delays: Vec<usize>,
        weights: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
    grad: Option<Vec<f64>>,
    // per-op saved values (row std for normalize)
    aux: Vec<f64>,
}

/// Recorded computation with gradient accumulators.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<Option<Var>>,
    backpropagated: bool,
}

/// Splits `shape` around `axis` into (outer, axis length, inner).
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = numel(&shape[..axis]);
    let inner = numel(&shape[axis + 1..]);
    (outer, shape[axis], inner)
}

fn broadcastable(lhs: &[usize], rhs: &[usize]) -> bool {
    lhs == rhs || numel(rhs) == 1 || (rhs.len() <= lhs.len() && lhs.ends_with(rhs))
}

fn accumulate(slot: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    slot.get_or_insert_with(|| vec![0.0; len])
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

    fn push(&mut self, value: Tensor, op: Op, aux: Vec<f64>) -> Result<Var, NumericsError> {
        if cfg!(debug_assertions) && !value.is_finite() {
            return Err(NumericsError::NonFinite { op: op_name(&op) });
        }
        let needs_grad = match &op {
            Op::Leaf => value.requires_grad(),
            Op::Param => true,
            other => parents(other).iter().any(|p| self.nodes[p.0].needs_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
            grad: None,
            aux,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Adds a constant, or a differentiable input when `requires_grad` is set.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, Vec::new())
            .unwrap_or_else(|_| panic!("non-finite leaf"))
    }

    /// Binds trainable parameter `index`; repeated calls return the same node.
    pub fn param(&mut self, index: usize, value: &Tensor) -> Var {
        if self.params.len() <= index {
            self.params.resize(index + 1, None);
        }
        if let Some(v) = self.params[index] {
            return v;
        }
        let v = self
            .push(value.clone(), Op::Param, Vec::new())
            .unwrap_or_else(|_| panic!("non-finite parameter {index}"));
        self.params[index] = Some(v);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let node = &self.nodes[v.0];
        node.grad
            .as_ref()
            .map(|g| Tensor::new(node.value.shape().to_vec(), g.clone()).expect("grad shape"))
    }

    /// Gradient of parameter `index` (zeros if it did not reach the loss).
    pub fn param_grad(&self, index: usize) -> Option<Tensor> {
        let v = (*self.params.get(index)?)?;
        Some(
            self.grad(v)
                .unwrap_or_else(|| Tensor::zeros(self.shape(v).to_vec())),
        )
    }

    pub fn reset_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.backpropagated = false;
    }

    fn binary_shape_check(
        &self,
        op: &'static str,
        a: Var,
        b: Var,
        broadcast: bool,
    ) -> Result<(), NumericsError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let ok = if broadcast {
            broadcastable(sa, sb)
        } else {
            sa == sb
        };
        if ok {
            Ok(())
        } else {
            Err(NumericsError::ShapeMismatch {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            })
        }
    }

    fn elementwise(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let n = tb.numel();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, tb.data()[i % n]))
            .collect();
        Tensor::new(ta.shape().to_vec(), data).expect("shape preserved")
    }

    /// `a + b`; `b` may be a scalar or broadcast over leading dims of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary_shape_check("add", a, b, true)?;
        let out = self.elementwise(a, b, |x, y| x + y);
        self.push(out, Op::Add(a, b), Vec::new())
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary_shape_check("sub", a, b, true)?;
        let out = self.elementwise(a, b, |x, y| x - y);
        self.push(out, Op::Sub(a, b), Vec::new())
    }

    /// Elementwise product with the same broadcasting as [`Graph::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary_shape_check("mul", a, b, true)?;
        let out = self.elementwise(a, b, |x, y| x * y);
        self.push(out, Op::Mul(a, b), Vec::new())
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, NumericsError> {
        let out = self.value(a).map(|x| x * factor);
        self.push(out, Op::Scale(a, factor), Vec::new())
    }

    /// `(…, m, k) · (k, n) → (…, m, n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() < 2 || sb.len() != 2 || sa[sa.len() - 1] != sb[0] {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let k = sb[0];
        let n = sb[1];
        let m = numel(&sa) / k;
        let mut out = vec![0.0; m * n];
        matmul_into(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            m,
            k,
            n,
        );
        let mut shape = sa;
        *shape.last_mut().expect("rank >= 2") = n;
        self.push(Tensor::new(shape, out)?, Op::MatMul(a, b), Vec::new())
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, NumericsError> {
        if self.value(a).rank() != 2 {
            return Err(NumericsError::Invalid {
                op: "transpose",
                msg: alloc::format!("expected rank 2, got shape {:?}", self.shape(a)),
            });
        }
        let out = self.value(a).transpose2();
        self.push(out, Op::Transpose(a), Vec::new())
    }

    fn check_axis(&self, op: &'static str, a: Var, axis: usize) -> Result<(), NumericsError> {
        let rank = self.value(a).rank();
        if axis >= rank {
            return Err(NumericsError::Axis { op, axis, rank });
        }
        Ok(())
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var, NumericsError> {
        self.check_axis("softmax", a, axis)?;
        let x = self.value(a);
        let (outer, n, inner) = axis_split(x.shape(), axis);
        let mut out = x.data().to_vec();
        let mut buf = vec![0.0; n];
        for o in 0..outer {
            for j in 0..inner {
                for i in 0..n {
                    buf[i] = out[(o * n + i) * inner + j];
                }
                softmax_in_place(&mut buf);
                for i in 0..n {
                    out[(o * n + i) * inner + j] = buf[i];
                }
            }
        }
        let shape = x.shape().to_vec();
        self.push(Tensor::new(shape, out)?, Op::Softmax(a, axis), Vec::new())
    }

    /// Zero-mean, unit-variance rows over the last axis (population variance).
    fn normalize(&mut self, a: Var) -> Result<Var, NumericsError> {
        const EPS: f64 = 1e-5;
        let x = self.value(a);
        let d = *x.shape().last().ok_or(NumericsError::Invalid {
            op: "layer_norm",
            msg: "rank 0 input".into(),
        })?;
        let rows = x.numel() / d;
        let mut out = x.data().to_vec();
        let mut stds = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &mut out[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let std = math::sqrt(var + EPS);
            row.iter_mut().for_each(|v| *v = (*v - mean) / std);
            stds.push(std);
        }
        let shape = x.shape().to_vec();
        self.push(Tensor::new(shape, out)?, Op::Normalize(a), stds)
    }

    /// Layer normalisation over the last axis with affine `gamma`, `beta`.
    pub fn layer_norm(&mut self, a: Var, gamma: Var, beta: Var) -> Result<Var, NumericsError> {
        let normed = self.normalize(a)?;
        let scaled = self.mul(normed, gamma)?;
        self.add(scaled, beta)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).map(|x| {
            let inner = GELU_C * (x + 0.044715 * x * x * x);
            0.5 * x * (1.0 + math::tanh(inner))
        });
        self.push(out, Op::Gelu(a), Vec::new())
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NumericsError> {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), Vec::new())
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, NumericsError> {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a), Vec::new())
    }

    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var, NumericsError> {
        self.binary_shape_check("mse_loss", pred, target, false)?;
        let (p, t) = (self.value(pred), self.value(target));
        let s = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / p.numel() as f64;
        self.push(Tensor::scalar(s), Op::Mse(pred, target), Vec::new())
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, NumericsError> {
        let first = *parts.first().ok_or(NumericsError::Invalid {
            op: "concat",
            msg: "no inputs".into(),
        })?;
        self.check_axis("concat", first, axis)?;
        let base = self.shape(first).to_vec();
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let same_rest = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !same_rest {
                return Err(NumericsError::ShapeMismatch {
                    op: "concat",
                    lhs: base,
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let (outer, _, inner) = axis_split(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let t = self.value(p);
                let n = t.shape()[axis];
                out.extend_from_slice(&t.data()[o * n * inner..(o + 1) * n * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        self.push(
            Tensor::new(shape, out)?,
            Op::Concat(parts.to_vec(), axis),
            Vec::new(),
        )
    }

    /// Entries `[start, end)` along `axis`.
    pub fn slice(
        &mut self,
        a: Var,
        axis: usize,
        start: usize,
        end: usize,
    ) -> Result<Var, NumericsError> {
        self.check_axis("slice", a, axis)?;
        let x = self.value(a);
        let (outer, n, inner) = axis_split(x.shape(), axis);
        if start > end || end > n {
            return Err(NumericsError::Invalid {
                op: "slice",
                msg: alloc::format!("range {start}..{end} out of bounds for length {n}"),
            });
        }
        let len = end - start;
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            out.extend_from_slice(&x.data()[(o * n + start) * inner..(o * n + end) * inner]);
        }
        let mut shape = x.shape().to_vec();
        shape[axis] = len;
        self.push(
            Tensor::new(shape, out)?,
            Op::Slice(a, axis, start, end),
            Vec::new(),
        )
    }

    /// Circular shift: element `i` moves to `(i + shift) mod n` along `axis`.
    pub fn roll(&mut self, a: Var, shift: isize, axis: usize) -> Result<Var, NumericsError> {
        self.check_axis("roll", a, axis)?;
        let x = self.value(a);
        let (outer, n, inner) = axis_split(x.shape(), axis);
        let mut out = vec![0.0; x.numel()];
        let s = shift.rem_euclid(n as isize) as usize;
        for o in 0..outer {
            for i in 0..n {
                let dst = (i + s) % n;
                let src = (o * n + i) * inner;
                out[(o * n + dst) * inner..(o * n + dst + 1) * inner]
                    .copy_from_slice(&x.data()[src..src + inner]);
            }
        }
        let shape = x.shape().to_vec();
        self.push(
            Tensor::new(shape, out)?,
            Op::Roll(a, shift, axis),
            Vec::new(),
        )
    }

    /// Centred moving average along the time axis of a `(T × d)` tensor,
    /// with the first and last rows replicated as padding.
    pub fn moving_average(&mut self, a: Var, kernel: usize) -> Result<Var, NumericsError> {
        let x = self.value(a);
        if x.rank() != 2 {
            return Err(NumericsError::Invalid {
                op: "moving_average",
                msg: alloc::format!("expected (time × channels), got {:?}", x.shape()),
            });
        }
        let out = moving_average_rows(x, kernel)?;
        self.push(out, Op::MovingAverage(a, kernel), Vec::new())
    }

    /// Auto-correlation attention for one head; see
    /// [`crate::numerics::autocorr_attention`]. Delay selection is a
    /// non-differentiable choice; gradients flow through the softmax
    /// weights and the rolled values.
    pub fn autocorr_attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        factor: f64,
    ) -> Result<Var, NumericsError> {
        let (tq, tk, tv) = (self.value(q), self.value(k), self.value(v));
        if tq.shape() != tk.shape() || tq.shape() != tv.shape() || tq.rank() != 2 {
            return Err(NumericsError::ShapeMismatch {
                op: "autocorr_attention",
                lhs: tq.shape().to_vec(),
                rhs: if tq.shape() != tk.shape() {
                    tk.shape().to_vec()
                } else {
                    tv.shape().to_vec()
                },
            });
        }
        if tq.rows() < 4 {
            return Err(NumericsError::TooShort {
                op: "autocorr_attention",
                len: tq.rows(),
                min: 4,
            });
        }
        let scores = autocorr_scores(tq, tk)?;
        let delays = select_delays(&scores, top_k_for(tq.rows(), factor));
        let mut weights: Vec<f64> = delays.iter().map(|&d| scores[d]).collect();
        softmax_in_place(&mut weights);
        let out = delay_aggregate(tv, &delays, &weights);
        self.push(
            out,
            Op::AutoCorr {
                q,
                k,
                v,
                delays,
                weights,
            },
            Vec::new(),
        )
    }

    /// Reverse pass from a scalar `loss`. Each node is visited once, in
    /// reverse recording order.
    pub fn backward(&mut self, loss: Var) -> Result<(), NumericsError> {
        if self.backpropagated {
            return Err(NumericsError::AlreadyBackpropagated);
        }
        if self.value(loss).numel() != 1 {
            return Err(NumericsError::NotScalar(self.shape(loss).to_vec()));
        }
        self.backpropagated = true;
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(grad) = self.nodes[idx].grad.take() else {
                continue;
            };
            self.propagate(idx, &grad);
            self.nodes[idx].grad = Some(grad);
        }
        Ok(())
    }

    fn grad_slot(&mut self, v: Var) -> Option<&mut Vec<f64>> {
        let node = &mut self.nodes[v.0];
        if !node.needs_grad {
            return None;
        }
        let len = node.value.numel();
        Some(accumulate(&mut node.grad, len))
    }

    fn propagate(&mut self, idx: usize, g: &[f64]) {
        let op = self.nodes[idx].op.clone();
        match op {
            Op::Leaf | Op::Param => {}
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if let Some(ga) = self.grad_slot(a) {
                    ga.iter_mut().zip(g).for_each(|(s, x)| *s += x);
                }
                if let Some(gb) = self.grad_slot(b) {
                    let n = gb.len();
                    for (i, x) in g.iter().enumerate() {
                        gb[i % n] += sign * x;
                    }
                }
            }
            Op::Mul(a, b) => {
                let av = self.value(a).data().to_vec();
                let bv = self.value(b).data().to_vec();
                let n = bv.len();
                if let Some(ga) = self.grad_slot(a) {
                    for (i, x) in g.iter().enumerate() {
                        ga[i] += x * bv[i % n];
                    }
                }
                if let Some(gb) = self.grad_slot(b) {
                    for (i, x) in g.iter().enumerate() {
                        gb[i % n] += x * av[i];
                    }
                }
            }
            Op::Scale(a, f) => {
                if let Some(ga) = self.grad_slot(a) {
                    ga.iter_mut().zip(g).for_each(|(s, x)| *s += f * x);
                }
            }
            Op::MatMul(a, b) => {
                let ta = self.value(a).clone();
                let tb = self.value(b).clone();
                let (k, n) = (tb.shape()[0], tb.shape()[1]);
                let m = ta.numel() / k;
                if let Some(ga) = self.grad_slot(a) {
                    // dA = G · Bᵀ
                    let bt = tb.transpose2();
                    matmul_into(g, bt.data(), ga, m, n, k);
                }
                if let Some(gb) = self.grad_slot(b) {
                    // dB = Aᵀ · G
                    let a2 = Tensor::new(vec![m, k], ta.into_data()).expect("flatten");
                    let at = a2.transpose2();
                    matmul_into(at.data(), g, gb, k, m, n);
                }
            }
            Op::Transpose(a) => {
                let s = self.shape(Var(idx)).to_vec();
                let gt = Tensor::new(s, g.to_vec()).expect("grad").transpose2();
                if let Some(ga) = self.grad_slot(a) {
                    ga.iter_mut().zip(gt.data()).for_each(|(s, x)| *s += x);
                }
            }
            Op::Softmax(a, axis) => {
                let y = self.nodes[idx].value.clone();
                let (outer, n, inner) = axis_split(y.shape(), axis);
                if let Some(ga) = self.grad_slot(a) {
                    for o in 0..outer {
                        for j in 0..inner {
                            let at = |i: usize| (o * n + i) * inner + j;
                            let dot: f64 = (0..n).map(|i| g[at(i)] * y.data()[at(i)]).sum();
                            for i in 0..n {
                                ga[at(i)] += y.data()[at(i)] * (g[at(i)] - dot);
                            }
                        }
                    }
                }
            }
            Op::Normalize(a) => {
                let y = self.nodes[idx].value.clone();
                let stds = self.nodes[idx].aux.clone();
                let d = *y.shape().last().expect("rank >= 1");
                if let Some(ga) = self.grad_slot(a) {
                    for (r, std) in stds.iter().enumerate() {
                        let gr = &g[r * d..(r + 1) * d];
                        let yr = &y.data()[r * d..(r + 1) * d];
                        let mean_g = gr.iter().sum::<f64>() / d as f64;
                        let mean_gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                        for i in 0..d {
                            ga[r * d + i] += (gr[i] - mean_g - yr[i] * mean_gy) / std;
                        }
                    }
                }
            }
            Op::Gelu(a) => {
                let x = self.value(a).data().to_vec();
                if let Some(ga) = self.grad_slot(a) {
                    for (i, &v) in x.iter().enumerate() {
                        let inner = GELU_C * (v + 0.044715 * v * v * v);
                        let t = math::tanh(inner);
                        let d = 0.5 * (1.0 + t)
                            + 0.5 * v * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * v * v);
                        ga[i] += g[i] * d;
                    }
                }
            }
            Op::Sum(a) | Op::Mean(a) => {
                let n = self.value(a).numel();
                let f = if matches!(op, Op::Mean(_)) {
                    g[0] / n as f64
                } else {
                    g[0]
                };
                if let Some(ga) = self.grad_slot(a) {
                    ga.iter_mut().for_each(|s| *s += f);
                }
            }
            Op::Mse(p, t) => {
                let pv = self.value(p).data().to_vec();
                let tv = self.value(t).data().to_vec();
                let f = 2.0 * g[0] / pv.len() as f64;
                if let Some(gp) = self.grad_slot(p) {
                    for i in 0..pv.len() {
                        gp[i] += f * (pv[i] - tv[i]);
                    }
                }
                if let Some(gt) = self.grad_slot(t) {
                    for i in 0..pv.len() {
                        gt[i] -= f * (pv[i] - tv[i]);
                    }
                }
            }
            Op::Concat(parts, axis) => {
                let out_shape = self.shape(Var(idx)).to_vec();
                let (outer, total, inner) = axis_split(&out_shape, axis);
                let mut offset = 0;
                for p in parts {
                    let n = self.shape(p)[axis];
                    if let Some(gp) = self.grad_slot(p) {
                        for o in 0..outer {
                            let src = (o * total + offset) * inner;
                            let dst = o * n * inner;
                            for i in 0..n * inner {
                                gp[dst + i] += g[src + i];
                            }
                        }
                    }
                    offset += n;
                }
            }
            Op::Slice(a, axis, start, end) => {
                let in_shape = self.shape(a).to_vec();
                let (outer, n, inner) = axis_split(&in_shape, axis);
                let len = end - start;
                if let Some(ga) = self.grad_slot(a) {
                    for o in 0..outer {
                        for i in 0..len * inner {
                            ga[(o * n + start) * inner + i] += g[o * len * inner + i];
                        }
                    }
                }
            }
            Op::Roll(a, shift, axis) => {
                let shape = self.shape(a).to_vec();
                let (outer, n, inner) = axis_split(&shape, axis);
                let s = shift.rem_euclid(n as isize) as usize;
                if let Some(ga) = self.grad_slot(a) {
                    for o in 0..outer {
                        for i in 0..n {
                            let dst = (i + s) % n;
                            for j in 0..inner {
                                ga[(o * n + i) * inner + j] += g[(o * n + dst) * inner + j];
                            }
                        }
                    }
                }
            }
            Op::MovingAverage(a, kernel) => {
                let shape = self.shape(a).to_vec();
                let (len, width) = (shape[0], shape[1]);
                let half = (kernel / 2) as isize;
                let w = 1.0 / kernel as f64;
                if let Some(ga) = self.grad_slot(a) {
                    for t in 0..len {
                        for j in -half..=half {
                            let src = (t as isize + j).clamp(0, len as isize - 1) as usize;
                            for c in 0..width {
                                ga[src * width + c] += w * g[t * width + c];
                            }
                        }
                    }
                }
            }
            Op::AutoCorr {
                q,
                k,
                v,
                delays,
                weights,
            } => self.autocorr_backward(g, q, k, v, &delays, &weights),
        }
    }

    fn autocorr_backward(
        &mut self,
        g: &[f64],
        q: Var,
        k: Var,
        v: Var,
        delays: &[usize],
        weights: &[f64],
    ) {
        let tv = self.value(v).clone();
        let (len, width) = (tv.rows(), tv.cols());
        // d loss / d weight_i = Σ_t,c G[t,c] · v[(t+τ_i) mod L, c]
        let dw: Vec<f64> = delays
            .iter()
            .map(|&tau| {
                (0..len)
                    .map(|t| {
                        let src = ((t + tau) % len) * width;
                        (0..width)
                            .map(|c| g[t * width + c] * tv.data()[src + c])
                            .sum::<f64>()
                    })
                    .sum()
            })
            .collect();
        if let Some(gv) = self.grad_slot(v) {
            for (&tau, &w) in delays.iter().zip(weights) {
                for t in 0..len {
                    let dst = ((t + tau) % len) * width;
                    for c in 0..width {
                        gv[dst + c] += w * g[t * width + c];
                    }
                }
            }
        }
        let mix: f64 = weights.iter().zip(&dw).map(|(w, d)| w * d).sum();
        let dr: Vec<f64> = weights
            .iter()
            .zip(&dw)
            .map(|(w, d)| w * (d - mix))
            .collect();
        let norm = 1.0 / (len * width) as f64;
        // R[τ] = norm · Σ_t,c q[(t+τ) mod L, c] · k[t, c]
        let tk = self.value(k).clone();
        let tq = self.value(q).clone();
        if let Some(gq) = self.grad_slot(q) {
            for (&tau, &d) in delays.iter().zip(&dr) {
                for t in 0..len {
                    let dst = ((t + tau) % len) * width;
                    for c in 0..width {
                        gq[dst + c] += d * norm * tk.data()[t * width + c];
                    }
                }
            }
        }
        if let Some(gk) = self.grad_slot(k) {
            for (&tau, &d) in delays.iter().zip(&dr) {
                for t in 0..len {
                    let src = ((t + tau) % len) * width;
                    for c in 0..width {
                        gk[t * width + c] += d * norm * tq.data()[src + c];
                    }
                }
            }
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)

fn parents(op: &Op) -> Vec<Var> {
    match op {
        Op::Leaf | Op::Param => Vec::new(),
        Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) | Op::Mse(a, b) => {
            vec![*a, *b]
        }
        Op::Scale(a, _)
        | Op::Transpose(a)
        | Op::Softmax(a, _)
        | Op::Normalize(a)
        | Op::Gelu(a)
        | Op::Sum(a)
        | Op::Mean(a)
        | Op::Slice(a, ..)
        | Op::Roll(a, ..)
        | Op::MovingAverage(a, _) => vec![*a],
        Op::Concat(parts, _) => parts.clone(),
        Op::AutoCorr { q, k, v, .. } => vec![*q, *k, *v],
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Param => "param",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::MatMul(..) => "matmul",
        Op::Transpose(_) => "transpose",
        Op::Softmax(..) => "softmax",
        Op::Normalize(_) => "layer_norm",
        Op::Gelu(_) => "gelu",
        Op::Sum(_) => "sum",
        Op::Mean(_) => "mean",
        Op::Mse(..) => "mse_loss",
        Op::Concat(..) => "concat",
        Op::Slice(..) => "slice",
        Op::Roll(..) => "roll",
        Op::MovingAverage(..) => "moving_average",
        Op::AutoCorr { .. } => "autocorr_attention",
    }
}

/// Centred moving average over rows with edge replication.
pub(crate) fn moving_average_rows(x: &Tensor, kernel: usize) -> Result<Tensor, NumericsError> {
    if kernel < 3 || kernel % 2 == 0 {
        return Err(NumericsError::Invalid {
            op: "moving_average",
            msg: alloc::format!("kernel must be odd and >= 3, got {kernel}"),
        });
    }
    let (len, width) = (x.shape()[0], x.shape()[1]);
    if len == 0 {
        return Ok(x.clone());
    }
    let half = (kernel / 2) as isize;
    let w = 1.0 / kernel as f64;
    let mut out = vec![0.0; len * width];
    for t in 0..len {
        for c in 0..width {
            let mut s = 0.0;
            for j in -half..=half {
                let src = (t as isize + j).clamp(0, len as isize - 1) as usize;
                s += x.data()[src * width + c];
            }
            out[t * width + c] = s * w;
        }
    }
    Tensor::new(vec![len, width], out)
}
