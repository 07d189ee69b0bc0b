//! Dynamic computation graph: a tape of primitive operations recorded during
//! the forward pass and replayed in reverse for gradients.
//!
//! Values live in the graph; leaves may point back at shared [`Var`] storage,
//! into which `backward` accumulates gradients. Conventions fixed here so the
//! test oracles agree with the implementation:
//!
//! * conv2d is cross-correlation (no kernel flip),
//! * maxpool2d routes the gradient to the first maximum in row-major scan,
//! * clip has gradient 1 strictly inside `(lo, hi)` and 0 elsewhere,
//! * elementwise binary ops require equal shapes, except that either operand
//!   may be a scalar (numel 1).

use crate::autodiff::tensor::{Tensor, Var};
use crate::error::{Error, Result};

/// Handle to a value recorded on one graph. Ids are only meaningful on the
/// graph that produced them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(usize);

enum Op {
    Leaf { source: Option<Var> },
    Matmul { a: ValueId, b: ValueId },
    Conv2d { input: ValueId, kernels: ValueId, stride: usize, pad: usize },
    ChannelBias { input: ValueId, bias: ValueId },
    MaxPool2d { input: ValueId, argmax: Vec<usize> },
    Relu { x: ValueId },
    Sigmoid { x: ValueId },
    Add { a: ValueId, b: ValueId },
    Sub { a: ValueId, b: ValueId },
    Mul { a: ValueId, b: ValueId },
    Scale { x: ValueId, factor: f64 },
    Log { x: ValueId },
    Exp { x: ValueId },
    Clip { x: ValueId, lo: f64, hi: f64 },
    Reshape { x: ValueId },
}

struct Node {
    op: Op,
    value: Tensor,
    adjoint: Vec<f64>,
}

/// A recorded forward pass. Nodes are appended in execution order, so the
/// tape itself is a topological order and one reverse sweep visits every
/// node exactly once.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// The forward value of a node.
    pub fn value(&self, id: ValueId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> ValueId {
        let adjoint = vec![0.0; value.numel()];
        self.nodes.push(Node { op, value, adjoint });
        ValueId(self.nodes.len() - 1)
    }

    /// Records a leaf bound to shared storage. Gradients flow back into the
    /// `Var` on `backward` when its tensor has tracking enabled.
    pub fn leaf(&mut self, var: &Var) -> ValueId {
        let value = var.tensor().clone();
        self.push(Op::Leaf { source: Some(var.clone()) }, value)
    }

    /// Records a leaf with no external storage; no gradient is kept for it.
    pub fn constant(&mut self, value: Tensor) -> ValueId {
        self.push(Op::Leaf { source: None }, value)
    }

    pub fn scalar(&mut self, value: f64) -> ValueId {
        self.constant(Tensor::scalar(value))
    }

    // ── Structural primitives ───────────────────────────────────────────

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (sa, sb) = (self.value(a).shape().to_vec(), self.value(b).shape().to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Shape(format!("matmul of {sa:?} by {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        {
            let da = self.value(a).data();
            let db = self.value(b).data();
            matmul_into(da, db, &mut out, m, k, n);
        }
        let value = Tensor::new(&[m, n], out)?;
        Ok(self.push(Op::Matmul { a, b }, value))
    }

    /// 2-D cross-correlation of a `c_in×h×w` input with `c_out×c_in×kh×kw`
    /// kernels, with symmetric zero padding.
    pub fn conv2d(&mut self, input: ValueId, kernels: ValueId, stride: usize, pad: usize) -> Result<ValueId> {
        let si = self.value(input).shape().to_vec();
        let sk = self.value(kernels).shape().to_vec();
        if si.len() != 3 || sk.len() != 4 || si[0] != sk[1] {
            return Err(Error::Shape(format!("conv2d of input {si:?} with kernels {sk:?}")));
        }
        if stride == 0 {
            return Err(Error::Contract("conv2d stride must be positive".into()));
        }
        let (c_in, h, w) = (si[0], si[1], si[2]);
        let (c_out, kh, kw) = (sk[0], sk[2], sk[3]);
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(Error::Shape(format!(
                "conv2d kernel {kh}x{kw} exceeds padded input {}x{}",
                h + 2 * pad,
                w + 2 * pad
            )));
        }
        let h_out = (h + 2 * pad - kh) / stride + 1;
        let w_out = (w + 2 * pad - kw) / stride + 1;
        let mut out = vec![0.0; c_out * h_out * w_out];
        {
            let x = self.value(input).data();
            let k = self.value(kernels).data();
            conv2d_forward(x, k, &mut out, ConvDims { c_in, h, w, c_out, kh, kw, stride, pad, h_out, w_out });
        }
        let value = Tensor::new(&[c_out, h_out, w_out], out)?;
        Ok(self.push(Op::Conv2d { input, kernels, stride, pad }, value))
    }

    /// Adds a per-channel bias vector of shape `[c]` to a `c×h×w` input.
    pub fn channel_bias(&mut self, input: ValueId, bias: ValueId) -> Result<ValueId> {
        let si = self.value(input).shape().to_vec();
        let sb = self.value(bias).shape().to_vec();
        if si.len() != 3 || sb.len() != 1 || sb[0] != si[0] {
            return Err(Error::Shape(format!("channel_bias of {si:?} with bias {sb:?}")));
        }
        let plane = si[1] * si[2];
        let mut out = self.value(input).data().to_vec();
        {
            let b = self.value(bias).data();
            for (c, bc) in b.iter().enumerate() {
                for v in &mut out[c * plane..(c + 1) * plane] {
                    *v += bc;
                }
            }
        }
        let value = Tensor::new(&si, out)?;
        Ok(self.push(Op::ChannelBias { input, bias }, value))
    }

    /// Per-window maximum over a `c×h×w` input; no padding.
    pub fn maxpool2d(&mut self, input: ValueId, window: usize, stride: usize) -> Result<ValueId> {
        let si = self.value(input).shape().to_vec();
        if si.len() != 3 {
            return Err(Error::Shape(format!("maxpool2d of {si:?}")));
        }
        if window == 0 || stride == 0 {
            return Err(Error::Contract("maxpool2d window and stride must be positive".into()));
        }
        let (c, h, w) = (si[0], si[1], si[2]);
        if window > h || window > w {
            return Err(Error::Shape(format!("maxpool2d window {window} exceeds input {h}x{w}")));
        }
        let h_out = (h - window) / stride + 1;
        let w_out = (w - window) / stride + 1;
        let mut out = vec![0.0; c * h_out * w_out];
        let mut argmax = vec![0usize; c * h_out * w_out];
        {
            let x = self.value(input).data();
            for ch in 0..c {
                let base = ch * h * w;
                for oi in 0..h_out {
                    for oj in 0..w_out {
                        let (i0, j0) = (oi * stride, oj * stride);
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = 0usize;
                        // Row-major scan; strict > keeps the first maximum on ties.
                        for u in 0..window {
                            let row = base + (i0 + u) * w + j0;
                            for v in 0..window {
                                let val = x[row + v];
                                if val > best {
                                    best = val;
                                    best_idx = row + v;
                                }
                            }
                        }
                        let o = ch * h_out * w_out + oi * w_out + oj;
                        out[o] = best;
                        argmax[o] = best_idx;
                    }
                }
            }
        }
        let value = Tensor::new(&[c, h_out, w_out], out)?;
        Ok(self.push(Op::MaxPool2d { input, argmax }, value))
    }

    /// Reinterprets the data under a new shape of equal element count.
    pub fn reshape(&mut self, x: ValueId, shape: &[usize]) -> Result<ValueId> {
        let numel: usize = shape.iter().product();
        if numel != self.value(x).numel() {
            return Err(Error::Shape(format!(
                "reshape of {:?} to {shape:?}",
                self.value(x).shape()
            )));
        }
        let value = Tensor::new(shape, self.value(x).data().to_vec())?;
        Ok(self.push(Op::Reshape { x }, value))
    }

    // ── Elementwise primitives ──────────────────────────────────────────

    pub fn relu(&mut self, x: ValueId) -> ValueId {
        let value = self.map_unary(x, |v| if v > 0.0 { v } else { 0.0 });
        self.push(Op::Relu { x }, value)
    }

    pub fn sigmoid(&mut self, x: ValueId) -> ValueId {
        let value = self.map_unary(x, sigmoid);
        self.push(Op::Sigmoid { x }, value)
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let value = self.zip_binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(Op::Add { a, b }, value))
    }

    pub fn sub(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let value = self.zip_binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(Op::Sub { a, b }, value))
    }

    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let value = self.zip_binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(Op::Mul { a, b }, value))
    }

    /// Multiplication by a compile-time constant (not a graph value).
    pub fn scale(&mut self, x: ValueId, factor: f64) -> ValueId {
        let value = self.map_unary(x, |v| factor * v);
        self.push(Op::Scale { x, factor }, value)
    }

    /// Natural logarithm. Every element must be strictly positive.
    pub fn log(&mut self, x: ValueId) -> Result<ValueId> {
        if let Some(bad) = self.value(x).data().iter().find(|v| **v <= 0.0) {
            return Err(Error::Domain(format!("log of nonpositive value {bad}")));
        }
        let value = self.map_unary(x, f64::ln);
        Ok(self.push(Op::Log { x }, value))
    }

    pub fn exp(&mut self, x: ValueId) -> ValueId {
        let value = self.map_unary(x, f64::exp);
        self.push(Op::Exp { x }, value)
    }

    /// Clamps into `[lo, hi]`; the gradient gate is open only on `(lo, hi)`.
    pub fn clip(&mut self, x: ValueId, lo: f64, hi: f64) -> Result<ValueId> {
        if !(lo < hi) {
            return Err(Error::Contract(format!("clip bounds [{lo}, {hi}] are not ordered")));
        }
        let value = self.map_unary(x, |v| v.clamp(lo, hi));
        Ok(self.push(Op::Clip { x, lo, hi }, value))
    }

    fn map_unary(&self, x: ValueId, f: impl Fn(f64) -> f64) -> Tensor {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| f(v)).collect();
        Tensor::new(src.shape(), data).expect("unary op preserves shape")
    }

    fn zip_binary(&self, a: ValueId, b: ValueId, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(ta.shape(), data)
        } else if tb.is_scalar() {
            let y = tb.item();
            let data = ta.data().iter().map(|&x| f(x, y)).collect();
            Tensor::new(ta.shape(), data)
        } else if ta.is_scalar() {
            let x = ta.item();
            let data = tb.data().iter().map(|&y| f(x, y)).collect();
            Tensor::new(tb.shape(), data)
        } else {
            Err(Error::Shape(format!("{name} of {:?} by {:?}", ta.shape(), tb.shape())))
        }
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Adjoints internal to the graph are
    /// reset on every call; gradients of tracked leaves accumulate in their
    /// `Var` storage across calls until `zero_grad`.
    pub fn backward(&mut self, loss: ValueId) -> Result<()> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        for node in &mut self.nodes {
            node.adjoint.fill(0.0);
        }
        self.nodes[loss.0].adjoint[0] = 1.0;

        for i in (0..=loss.0).rev() {
            // Split off the tail so the node's adjoint can be read while the
            // adjoints of its (strictly earlier) operands are written.
            let (head, tail) = self.nodes.split_at_mut(i);
            let node = &mut tail[0];
            match &node.op {
                Op::Leaf { source } => {
                    if let Some(var) = source {
                        var.tensor_mut().accumulate_grad(&node.adjoint);
                    }
                }
                Op::Matmul { a, b } => {
                    let (m, n) = (node.value.shape()[0], node.value.shape()[1]);
                    let k = head[a.0].value.shape()[1];
                    let dy = &node.adjoint;
                    // dL/da = dy · bᵀ
                    {
                        let db_val = head[b.0].value.data().to_vec();
                        let ga = &mut head[a.0].adjoint;
                        for r in 0..m {
                            for c in 0..k {
                                let mut acc = 0.0;
                                for j in 0..n {
                                    acc += dy[r * n + j] * db_val[c * n + j];
                                }
                                ga[r * k + c] += acc;
                            }
                        }
                    }
                    // dL/db = aᵀ · dy
                    {
                        let da_val = head[a.0].value.data().to_vec();
                        let gb = &mut head[b.0].adjoint;
                        for r in 0..k {
                            for c in 0..n {
                                let mut acc = 0.0;
                                for j in 0..m {
                                    acc += da_val[j * k + r] * dy[j * n + c];
                                }
                                gb[r * n + c] += acc;
                            }
                        }
                    }
                }
                Op::Conv2d { input, kernels, stride, pad } => {
                    let si = head[input.0].value.shape().to_vec();
                    let sk = head[kernels.0].value.shape().to_vec();
                    let so = node.value.shape();
                    let dims = ConvDims {
                        c_in: si[0],
                        h: si[1],
                        w: si[2],
                        c_out: sk[0],
                        kh: sk[2],
                        kw: sk[3],
                        stride: *stride,
                        pad: *pad,
                        h_out: so[1],
                        w_out: so[2],
                    };
                    let x = head[input.0].value.data().to_vec();
                    let k = head[kernels.0].value.data().to_vec();
                    let (dx, dk) = two_adjoints(head, input.0, kernels.0);
                    conv2d_backward(&x, &k, &node.adjoint, dx, dk, dims);
                }
                Op::ChannelBias { input, bias } => {
                    let plane = {
                        let s = head[input.0].value.shape();
                        s[1] * s[2]
                    };
                    let dy = &node.adjoint;
                    for (idx, d) in dy.iter().enumerate() {
                        head[input.0].adjoint[idx] += d;
                    }
                    let gb = &mut head[bias.0].adjoint;
                    for (c, g) in gb.iter_mut().enumerate() {
                        *g += dy[c * plane..(c + 1) * plane].iter().sum::<f64>();
                    }
                }
                Op::MaxPool2d { input, argmax } => {
                    let gx = &mut head[input.0].adjoint;
                    for (o, &src) in argmax.iter().enumerate() {
                        gx[src] += node.adjoint[o];
                    }
                }
                Op::Relu { x } => {
                    let xv = head[x.0].value.data().to_vec();
                    let gx = &mut head[x.0].adjoint;
                    for (i, d) in node.adjoint.iter().enumerate() {
                        if xv[i] > 0.0 {
                            gx[i] += d;
                        }
                    }
                }
                Op::Sigmoid { x } => {
                    let yv = node.value.data();
                    let gx = &mut head[x.0].adjoint;
                    for (i, d) in node.adjoint.iter().enumerate() {
                        gx[i] += d * yv[i] * (1.0 - yv[i]);
                    }
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    accumulate_to_operand(&node.adjoint, &mut head[a.0].adjoint);
                    accumulate_to_operand(&node.adjoint, &mut head[b.0].adjoint);
                }
                Op::Sub { a, b } => {
                    let (a, b) = (*a, *b);
                    accumulate_to_operand(&node.adjoint, &mut head[a.0].adjoint);
                    let neg: Vec<f64> = node.adjoint.iter().map(|d| -d).collect();
                    accumulate_to_operand(&neg, &mut head[b.0].adjoint);
                }
                Op::Mul { a, b } => {
                    let (a, b) = (*a, *b);
                    let av = head[a.0].value.data().to_vec();
                    let bv = head[b.0].value.data().to_vec();
                    let weighted_b: Vec<f64> = node
                        .adjoint
                        .iter()
                        .enumerate()
                        .map(|(i, d)| d * bv[i % bv.len()])
                        .collect();
                    accumulate_to_operand(&weighted_b, &mut head[a.0].adjoint);
                    let weighted_a: Vec<f64> = node
                        .adjoint
                        .iter()
                        .enumerate()
                        .map(|(i, d)| d * av[i % av.len()])
                        .collect();
                    accumulate_to_operand(&weighted_a, &mut head[b.0].adjoint);
                }
                Op::Scale { x, factor } => {
                    let f = *factor;
                    let gx = &mut head[x.0].adjoint;
                    for (i, d) in node.adjoint.iter().enumerate() {
                        gx[i] += f * d;
                    }
                }
                Op::Log { x } => {
                    let xv = head[x.0].value.data().to_vec();
                    let gx = &mut head[x.0].adjoint;
                    for (i, d) in node.adjoint.iter().enumerate() {
                        gx[i] += d / xv[i];
                    }
                }
                Op::Exp { x } => {
                    let yv = node.value.data();
                    let gx = &mut head[x.0].adjoint;
                    for (i, d) in node.adjoint.iter().enumerate() {
                        gx[i] += d * yv[i];
                    }
                }
                Op::Clip { x, lo, hi } => {
                    let (lo, hi) = (*lo, *hi);
                    let xv = head[x.0].value.data().to_vec();
                    let gx = &mut head[x.0].adjoint;
                    for (i, d) in node.adjoint.iter().enumerate() {
                        if xv[i] > lo && xv[i] < hi {
                            gx[i] += d;
                        }
                    }
                }
                Op::Reshape { x } => {
                    let gx = &mut head[x.0].adjoint;
                    for (i, d) in node.adjoint.iter().enumerate() {
                        gx[i] += d;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Mutable adjoints of two distinct nodes.
fn two_adjoints(nodes: &mut [Node], a: usize, b: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert_ne!(a, b);
    if a < b {
        let (left, right) = nodes.split_at_mut(b);
        (&mut left[a].adjoint, &mut right[0].adjoint)
    } else {
        let (left, right) = nodes.split_at_mut(a);
        (&mut right[0].adjoint, &mut left[b].adjoint)
    }
}

/// Adds `delta` into an operand adjoint, reducing by sum when the operand was
/// a broadcast scalar.
fn accumulate_to_operand(delta: &[f64], operand: &mut [f64]) {
    if operand.len() == delta.len() {
        for (g, d) in operand.iter_mut().zip(delta) {
            *g += d;
        }
    } else {
        debug_assert_eq!(operand.len(), 1);
        operand[0] += delta.iter().sum::<f64>();
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for r in 0..m {
        let arow = &a[r * k..(r + 1) * k];
        let orow = &mut out[r * n..(r + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            let brow = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

#[derive(Clone, Copy)]
struct ConvDims {
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    h_out: usize,
    w_out: usize,
}

impl ConvDims {
    /// For kernel column `v`, the output-column range whose input column
    /// `oj*stride + v - pad` lands inside `[0, w)`.
    fn oj_range(&self, v: usize) -> (usize, usize) {
        let lo = if v >= self.pad { 0 } else { (self.pad - v).div_ceil(self.stride) };
        let hi_num = self.w + self.pad;
        let hi = if hi_num > v {
            ((hi_num - v - 1) / self.stride + 1).min(self.w_out)
        } else {
            0
        };
        (lo.min(self.w_out), hi)
    }

    fn input_row(&self, oi: usize, u: usize) -> Option<usize> {
        let ii = oi * self.stride + u;
        if ii < self.pad {
            return None;
        }
        let ii = ii - self.pad;
        (ii < self.h).then_some(ii)
    }
}

fn conv2d_forward(x: &[f64], k: &[f64], out: &mut [f64], d: ConvDims) {
    for co in 0..d.c_out {
        for ci in 0..d.c_in {
            let x_chan = &x[ci * d.h * d.w..(ci + 1) * d.h * d.w];
            for u in 0..d.kh {
                for v in 0..d.kw {
                    let kv = k[((co * d.c_in + ci) * d.kh + u) * d.kw + v];
                    if kv == 0.0 {
                        continue;
                    }
                    let (oj_lo, oj_hi) = d.oj_range(v);
                    for oi in 0..d.h_out {
                        let Some(ii) = d.input_row(oi, u) else { continue };
                        let x_row = &x_chan[ii * d.w..(ii + 1) * d.w];
                        let o_row = &mut out[(co * d.h_out + oi) * d.w_out..(co * d.h_out + oi + 1) * d.w_out];
                        for oj in oj_lo..oj_hi {
                            o_row[oj] += kv * x_row[oj * d.stride + v - d.pad];
                        }
                    }
                }
            }
        }
    }
}

fn conv2d_backward(x: &[f64], k: &[f64], dy: &[f64], dx: &mut [f64], dk: &mut [f64], d: ConvDims) {
    for co in 0..d.c_out {
        for ci in 0..d.c_in {
            let x_chan = &x[ci * d.h * d.w..(ci + 1) * d.h * d.w];
            let dx_chan = &mut dx[ci * d.h * d.w..(ci + 1) * d.h * d.w];
            for u in 0..d.kh {
                for v in 0..d.kw {
                    let kidx = ((co * d.c_in + ci) * d.kh + u) * d.kw + v;
                    let kv = k[kidx];
                    let mut kacc = 0.0;
                    let (oj_lo, oj_hi) = d.oj_range(v);
                    for oi in 0..d.h_out {
                        let Some(ii) = d.input_row(oi, u) else { continue };
                        let x_row = &x_chan[ii * d.w..(ii + 1) * d.w];
                        let dx_row = &mut dx_chan[ii * d.w..(ii + 1) * d.w];
                        let dy_row = &dy[(co * d.h_out + oi) * d.w_out..(co * d.h_out + oi + 1) * d.w_out];
                        for oj in oj_lo..oj_hi {
                            let jj = oj * d.stride + v - d.pad;
                            let g = dy_row[oj];
                            kacc += g * x_row[jj];
                            dx_row[jj] += g * kv;
                        }
                    }
                    dk[kidx] += kacc;
                }
            }
        }
    }
}
