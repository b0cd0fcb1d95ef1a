use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::gemm::{gemm, MatRef};
use super::kernels::{self, ConvGeometry};
use crate::{Error, Real, Result, Tensor};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Position of a parameter tensor in a model's stable parameter order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
}

/// Primitive kinds accepted by [`Tape::apply`].
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    MatMul,
    Conv2d { stride: usize, padding: usize },
    MaxPool2d { size: usize, stride: usize },
    AddBias,
    Relu,
    Softmax,
    Reshape(Vec<usize>),
    Flatten,
}

#[derive(Debug)]
enum Op {
    Constant,
    Variable,
    Param(ParamId),
    Detached,
    MatMul { a: usize, b: usize, m: usize, k: usize, n: usize },
    Conv2d { input: usize, weight: usize, geom: ConvGeometry, cols: Vec<Real> },
    MaxPool2d { input: usize, winners: Vec<usize> },
    AddBias { input: usize, bias: usize, channels: usize, inner: usize },
    Relu { input: usize },
    Tanh { input: usize },
    Softmax { input: usize, cols: usize },
    Reshape { input: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { input: usize, factor: Real },
    Sum { input: usize },
    WeightedSum { input: usize, weights: Vec<Real> },
    SoftmaxCrossEntropy { logits: usize, labels: Vec<usize>, probs: Vec<Real> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Record of primitive operations. One tape is owned by one computation.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    recording: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    /// A recording tape.
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            recording: true,
        }
    }

    /// A tape that evaluates primitives without recording adjoint state.
    pub fn inference() -> Self {
        Tape {
            recording: false,
            ..Self::new()
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    /// Number of recorded nodes, leaves included.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Value of a recorded variable.
    ///
    /// Panics if `v` belongs to another tape.
    pub fn value(&self, v: Var) -> &Tensor {
        assert_eq!(v.tape, self.id, "variable belongs to a different tape");
        &self.nodes[v.index].value
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, Op::Constant, false)
    }

    /// A differentiable non-parameter leaf (e.g. an input image under attack).
    pub fn variable(&mut self, value: Tensor) -> Var {
        let recording = self.recording;
        self.leaf(value, Op::Variable, recording)
    }

    pub fn param(&mut self, value: Tensor, id: ParamId) -> Var {
        let recording = self.recording;
        self.leaf(value, Op::Param(id), recording)
    }

    fn leaf(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        let op = if self.recording { op } else { Op::Detached };
        self.nodes.push(Node { value, op, needs_grad });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::invalid("variable does not belong to this tape"));
        }
        Ok(v.index)
    }

    fn shape(&self, i: usize) -> &[usize] {
        self.nodes[i].value.shape()
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[usize]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let needs_grad = self.recording && inputs.iter().any(|&i| self.nodes[i].needs_grad);
        let op = if self.recording { op } else { Op::Detached };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        })
    }

    fn mismatch(&self, op: &'static str, a: usize, b: usize) -> Error {
        Error::ShapeMismatch {
            op,
            lhs: self.shape(a).to_vec(),
            rhs: self.shape(b).to_vec(),
        }
    }

    /// Dispatches a primitive by kind.
    pub fn apply(&mut self, prim: &Primitive, inputs: &[Var]) -> Result<Var> {
        let arity = match prim {
            Primitive::MatMul | Primitive::Conv2d { .. } | Primitive::AddBias => 2,
            _ => 1,
        };
        if inputs.len() != arity {
            return Err(Error::invalid(format!(
                "{prim:?} expects {arity} inputs, got {}",
                inputs.len()
            )));
        }
        match prim {
            Primitive::MatMul => self.matmul(inputs[0], inputs[1]),
            Primitive::Conv2d { stride, padding } => self.conv2d(inputs[0], inputs[1], *stride, *padding),
            Primitive::MaxPool2d { size, stride } => self.max_pool2d(inputs[0], *size, *stride),
            Primitive::AddBias => self.add_bias(inputs[0], inputs[1]),
            Primitive::Relu => self.relu(inputs[0]),
            Primitive::Softmax => self.softmax(inputs[0]),
            Primitive::Reshape(shape) => self.reshape(inputs[0], shape),
            Primitive::Flatten => self.flatten(inputs[0]),
        }
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let (sa, sb) = (self.shape(ai), self.shape(bi));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(self.mismatch("matmul", ai, bi));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            MatRef::new(self.nodes[ai].value.data(), m, k),
            MatRef::new(self.nodes[bi].value.data(), k, n),
            &mut out,
            false,
        );
        let value = Tensor::new(vec![m, n], out)?;
        self.push("matmul", value, Op::MatMul { a: ai, b: bi, m, k, n }, &[ai, bi])
    }

    /// NCHW input, OIHW weight, zero padding.
    pub fn conv2d(&mut self, input: Var, weight: Var, stride: usize, padding: usize) -> Result<Var> {
        let (xi, wi) = (self.idx(input)?, self.idx(weight)?);
        let (sx, sw) = (self.shape(xi), self.shape(wi));
        if sx.len() != 4 || sw.len() != 4 || sx[1] != sw[1] {
            return Err(self.mismatch("conv2d", xi, wi));
        }
        let out_h = kernels::window_out(sx[2], sw[2], stride, padding);
        let out_w = kernels::window_out(sx[3], sw[3], stride, padding);
        let (Some(out_h), Some(out_w)) = (out_h, out_w) else {
            return Err(self.mismatch("conv2d", xi, wi));
        };
        let geom = ConvGeometry {
            batch: sx[0],
            in_channels: sx[1],
            height: sx[2],
            width: sx[3],
            out_channels: sw[0],
            kernel_h: sw[2],
            kernel_w: sw[3],
            stride,
            padding,
            out_h,
            out_w,
        };
        let (out, cols) =
            kernels::conv2d_forward(&geom, self.nodes[xi].value.data(), self.nodes[wi].value.data());
        let value = Tensor::new(vec![geom.batch, geom.out_channels, out_h, out_w], out)?;
        let cols = if self.recording { cols } else { Vec::new() };
        self.push(
            "conv2d",
            value,
            Op::Conv2d {
                input: xi,
                weight: wi,
                geom,
                cols,
            },
            &[xi, wi],
        )
    }

    /// Non-overlapping or strided max-pool over the two trailing axes of NCHW.
    pub fn max_pool2d(&mut self, input: Var, size: usize, stride: usize) -> Result<Var> {
        let xi = self.idx(input)?;
        let s = self.shape(xi).to_vec();
        let bad = || Error::ShapeMismatch {
            op: "max_pool2d",
            lhs: s.clone(),
            rhs: vec![size, size],
        };
        if s.len() != 4 {
            return Err(bad());
        }
        let out_h = kernels::window_out(s[2], size, stride, 0).ok_or_else(bad)?;
        let out_w = kernels::window_out(s[3], size, stride, 0).ok_or_else(bad)?;
        let (out, winners) = kernels::max_pool2d_forward(
            self.nodes[xi].value.data(),
            s[0] * s[1],
            s[2],
            s[3],
            size,
            stride,
            out_h,
            out_w,
        );
        let value = Tensor::new(vec![s[0], s[1], out_h, out_w], out)?;
        self.push("max_pool2d", value, Op::MaxPool2d { input: xi, winners }, &[xi])
    }

    /// Adds a per-channel bias; the channel axis is axis 1 (`[N, C, ...]`).
    pub fn add_bias(&mut self, input: Var, bias: Var) -> Result<Var> {
        let (xi, bi) = (self.idx(input)?, self.idx(bias)?);
        let (sx, sb) = (self.shape(xi), self.shape(bi));
        if sx.len() < 2 || sb.len() != 1 || sb[0] != sx[1] {
            return Err(self.mismatch("add_bias", xi, bi));
        }
        let channels = sx[1];
        let inner: usize = sx[2..].iter().product();
        let mut value = self.nodes[xi].value.clone();
        let b = self.nodes[bi].value.data();
        for (j, v) in value.data_mut().iter_mut().enumerate() {
            *v += b[(j / inner) % channels];
        }
        self.push(
            "add_bias",
            value,
            Op::AddBias {
                input: xi,
                bias: bi,
                channels,
                inner,
            },
            &[xi, bi],
        )
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        let xi = self.idx(input)?;
        let value = self.nodes[xi].value.map(|v| if v > 0.0 { v } else { 0.0 });
        self.push("relu", value, Op::Relu { input: xi }, &[xi])
    }

    pub fn tanh(&mut self, input: Var) -> Result<Var> {
        let xi = self.idx(input)?;
        let value = self.nodes[xi].value.map(Real::tanh);
        self.push("tanh", value, Op::Tanh { input: xi }, &[xi])
    }

    /// Row-wise softmax of a `[rows, cols]` matrix.
    pub fn softmax(&mut self, input: Var) -> Result<Var> {
        let xi = self.idx(input)?;
        let s = self.shape(xi).to_vec();
        if s.len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "softmax",
                lhs: s,
                rhs: vec![],
            });
        }
        let out = kernels::softmax_rows(self.nodes[xi].value.data(), s[1]);
        let value = Tensor::new(s.clone(), out)?;
        self.push("softmax", value, Op::Softmax { input: xi, cols: s[1] }, &[xi])
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let xi = self.idx(input)?;
        let value = self.nodes[xi].value.clone().reshape(shape)?;
        self.push("reshape", value, Op::Reshape { input: xi }, &[xi])
    }

    /// `[N, ...] -> [N, prod(...)]`.
    pub fn flatten(&mut self, input: Var) -> Result<Var> {
        let xi = self.idx(input)?;
        let s = self.shape(xi);
        let rest: usize = s[1..].iter().product();
        let shape = [s[0], rest.max(1)];
        self.reshape(input, &shape)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        if self.shape(ai) != self.shape(bi) {
            return Err(self.mismatch(op, ai, bi));
        }
        Ok((ai, bi))
    }

    fn zip_with(&self, ai: usize, bi: usize, f: impl Fn(Real, Real) -> Real) -> Result<Tensor> {
        let (a, b) = (&self.nodes[ai].value, &self.nodes[bi].value);
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(a.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = self.same_shape("add", a, b)?;
        let value = self.zip_with(ai, bi, |x, y| x + y)?;
        self.push("add", value, Op::Add { a: ai, b: bi }, &[ai, bi])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = self.same_shape("sub", a, b)?;
        let value = self.zip_with(ai, bi, |x, y| x - y)?;
        self.push("sub", value, Op::Sub { a: ai, b: bi }, &[ai, bi])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = self.same_shape("mul", a, b)?;
        let value = self.zip_with(ai, bi, |x, y| x * y)?;
        self.push("mul", value, Op::Mul { a: ai, b: bi }, &[ai, bi])
    }

    pub fn scale(&mut self, input: Var, factor: Real) -> Result<Var> {
        let xi = self.idx(input)?;
        let value = self.nodes[xi].value.map(|v| v * factor);
        self.push("scale", value, Op::Scale { input: xi, factor }, &[xi])
    }

    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let xi = self.idx(input)?;
        let total = self.nodes[xi].value.data().iter().sum();
        self.push("sum", Tensor::scalar(total), Op::Sum { input: xi }, &[xi])
    }

    /// `sum_i weights[i] * input[i]` with constant weights.
    pub fn weighted_sum(&mut self, input: Var, weights: &[Real]) -> Result<Var> {
        let xi = self.idx(input)?;
        let x = &self.nodes[xi].value;
        if x.numel() != weights.len() {
            return Err(Error::ShapeMismatch {
                op: "weighted_sum",
                lhs: x.shape().to_vec(),
                rhs: vec![weights.len()],
            });
        }
        let total = x.data().iter().zip(weights).map(|(a, b)| a * b).sum();
        self.push(
            "weighted_sum",
            Tensor::scalar(total),
            Op::WeightedSum {
                input: xi,
                weights: weights.to_vec(),
            },
            &[xi],
        )
    }

    /// Mean softmax cross-entropy of `[N, C]` logits against `labels`.
    ///
    /// The probability is floored at [`PROB_FLOOR`](super::PROB_FLOOR) before the log.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let li = self.idx(logits)?;
        let s = self.shape(li).to_vec();
        if s.len() != 2 || s[0] != labels.len() {
            return Err(Error::ShapeMismatch {
                op: "softmax_cross_entropy",
                lhs: s,
                rhs: vec![labels.len()],
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= s[1]) {
            return Err(Error::invalid(format!(
                "softmax_cross_entropy: label {bad} out of range for {} classes",
                s[1]
            )));
        }
        let probs = kernels::softmax_rows(self.nodes[li].value.data(), s[1]);
        let loss = kernels::cross_entropy_value(&probs, labels, s[1]);
        self.push(
            "softmax_cross_entropy",
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits: li,
                labels: labels.to_vec(),
                probs,
            },
            &[li],
        )
    }

    /// Replays adjoints from a scalar `loss` and returns gradients for every
    /// reachable parameter and variable leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if loss.tape != self.id || loss.index >= self.nodes.len() {
            return Err(Error::Backward("loss was not recorded on this tape".into()));
        }
        if !self.recording {
            return Err(Error::Backward("tape is not recording".into()));
        }
        let root = &self.nodes[loss.index];
        if !root.value.is_scalar() {
            return Err(Error::Backward(format!(
                "loss must be scalar, got shape {:?}",
                root.value.shape()
            )));
        }

        let mut adj: Vec<Option<Vec<Real>>> = Vec::with_capacity(loss.index + 1);
        adj.resize_with(loss.index + 1, || None);
        adj[loss.index] = Some(vec![1.0]);
        let mut grads = Gradients {
            tape: self.id,
            ..Gradients::default()
        };

        for i in (0..=loss.index).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            grads.visited += 1;
            match &node.op {
                Op::Constant | Op::Detached => {}
                Op::Variable => {
                    grads
                        .variables
                        .insert(i, Tensor::new(node.value.shape().to_vec(), g)?);
                }
                Op::Param(id) => match grads.params.get_mut(id) {
                    Some(existing) => existing
                        .data_mut()
                        .iter_mut()
                        .zip(&g)
                        .for_each(|(e, v)| *e += v),
                    None => {
                        grads
                            .params
                            .insert(*id, Tensor::new(node.value.shape().to_vec(), g)?);
                    }
                },
                Op::MatMul { a, b, m, k, n } => {
                    let (m, k, n) = (*m, *k, *n);
                    let gm = MatRef::new(&g, m, n);
                    if let Some(ga) = self.slot(&mut adj, *a) {
                        gemm(gm, MatRef::new(self.nodes[*b].value.data(), k, n).t(), ga, true);
                    }
                    if let Some(gb) = self.slot(&mut adj, *b) {
                        gemm(MatRef::new(self.nodes[*a].value.data(), m, k).t(), gm, gb, true);
                    }
                }
                Op::Conv2d {
                    input,
                    weight,
                    geom,
                    cols,
                } => {
                    if let Some(gw) = self.slot(&mut adj, *weight) {
                        kernels::conv2d_backward_weight(geom, cols, &g, gw);
                    }
                    if let Some(gx) = self.slot(&mut adj, *input) {
                        kernels::conv2d_backward_input(geom, self.nodes[*weight].value.data(), &g, gx);
                    }
                }
                Op::MaxPool2d { input, winners } => {
                    if let Some(gx) = self.slot(&mut adj, *input) {
                        for (&w, &v) in winners.iter().zip(&g) {
                            gx[w] += v;
                        }
                    }
                }
                Op::AddBias {
                    input,
                    bias,
                    channels,
                    inner,
                } => {
                    if let Some(gx) = self.slot(&mut adj, *input) {
                        gx.iter_mut().zip(&g).for_each(|(d, v)| *d += v);
                    }
                    if let Some(gb) = self.slot(&mut adj, *bias) {
                        for (j, v) in g.iter().enumerate() {
                            gb[(j / inner) % channels] += v;
                        }
                    }
                }
                Op::Relu { input } => {
                    let x = self.nodes[*input].value.data();
                    if let Some(gx) = self.slot(&mut adj, *input) {
                        for ((d, v), &xv) in gx.iter_mut().zip(&g).zip(x) {
                            if xv > 0.0 {
                                *d += v;
                            }
                        }
                    }
                }
                Op::Tanh { input } => {
                    let y = node.value.data();
                    if let Some(gx) = self.slot(&mut adj, *input) {
                        for ((d, v), &yv) in gx.iter_mut().zip(&g).zip(y) {
                            *d += v * (1.0 - yv * yv);
                        }
                    }
                }
                Op::Softmax { input, cols } => {
                    let y = node.value.data();
                    if let Some(gx) = self.slot(&mut adj, *input) {
                        for ((dr, gr), yr) in gx.chunks_mut(*cols).zip(g.chunks(*cols)).zip(y.chunks(*cols)) {
                            let dot: Real = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                            for ((d, &gv), &yv) in dr.iter_mut().zip(gr).zip(yr) {
                                *d += yv * (gv - dot);
                            }
                        }
                    }
                }
                Op::Reshape { input } => {
                    if let Some(gx) = self.slot(&mut adj, *input) {
                        gx.iter_mut().zip(&g).for_each(|(d, v)| *d += v);
                    }
                }
                Op::Add { a, b } | Op::Sub { a, b } => {
                    let sign = if matches!(node.op, Op::Sub { .. }) { -1.0 } else { 1.0 };
                    if let Some(ga) = self.slot(&mut adj, *a) {
                        ga.iter_mut().zip(&g).for_each(|(d, v)| *d += v);
                    }
                    if let Some(gb) = self.slot(&mut adj, *b) {
                        gb.iter_mut().zip(&g).for_each(|(d, v)| *d += sign * v);
                    }
                }
                Op::Mul { a, b } => {
                    let (av, bv) = (self.nodes[*a].value.data(), self.nodes[*b].value.data());
                    if let Some(ga) = self.slot(&mut adj, *a) {
                        for ((d, v), y) in ga.iter_mut().zip(&g).zip(bv) {
                            *d += v * y;
                        }
                    }
                    if let Some(gb) = self.slot(&mut adj, *b) {
                        for ((d, v), x) in gb.iter_mut().zip(&g).zip(av) {
                            *d += v * x;
                        }
                    }
                }
                Op::Scale { input, factor } => {
                    if let Some(gx) = self.slot(&mut adj, *input) {
                        gx.iter_mut().zip(&g).for_each(|(d, v)| *d += factor * v);
                    }
                }
                Op::Sum { input } => {
                    if let Some(gx) = self.slot(&mut adj, *input) {
                        gx.iter_mut().for_each(|d| *d += g[0]);
                    }
                }
                Op::WeightedSum { input, weights } => {
                    if let Some(gx) = self.slot(&mut adj, *input) {
                        gx.iter_mut().zip(weights).for_each(|(d, w)| *d += g[0] * w);
                    }
                }
                Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                    let classes = probs.len() / labels.len();
                    let scale = g[0] / labels.len() as Real;
                    if let Some(gl) = self.slot(&mut adj, *logits) {
                        for (row, &y) in labels.iter().enumerate() {
                            for c in 0..classes {
                                let j = row * classes + c;
                                let onehot = if c == y { 1.0 } else { 0.0 };
                                gl[j] += scale * (probs[j] - onehot);
                            }
                        }
                    }
                }
            }
        }
        Ok(grads)
    }

    /// Adjoint buffer for `index`, allocated on first use; `None` if the node
    /// does not need a gradient.
    fn slot<'a>(&self, adj: &'a mut [Option<Vec<Real>>], index: usize) -> Option<&'a mut [Real]> {
        if !self.nodes[index].needs_grad {
            return None;
        }
        let len = self.nodes[index].value.numel();
        Some(adj[index].get_or_insert_with(|| vec![0.0; len]).as_mut_slice())
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Gradients {
    tape: u64,
    params: BTreeMap<ParamId, Tensor>,
    variables: BTreeMap<usize, Tensor>,
    visited: usize,
}

impl Gradients {
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id)
    }

    /// Gradient with respect to a [`Tape::variable`] leaf.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        if v.tape != self.tape {
            return None;
        }
        self.variables.get(&v.index)
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params.iter().map(|(k, v)| (*k, v))
    }

    pub fn into_params(self) -> BTreeMap<ParamId, Tensor> {
        self.params
    }

    /// Number of nodes whose adjoint was replayed.
    pub fn visited_nodes(&self) -> usize {
        self.visited
    }
}
