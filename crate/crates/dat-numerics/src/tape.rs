//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records one forward pass as an append-only list of nodes;
//! inputs always precede their consumers, so the node order is already
//! topological. [`Graph::backward`] replays the tape in reverse and returns
//! the gradient for every bound parameter as one flat vector. Graphs are
//! rebuilt per forward pass; there is no reuse.

use rand_chacha::ChaCha8Rng;

use crate::error::{NumericsError, Result};
use crate::kernels;
use crate::mask::{ClassMap, PixelMask};
use crate::ops;
use crate::tensor::Tensor;

/// Probabilities are clamped to `[CLAMP_LO, 1]` before any log.
pub const CLAMP_LO: f32 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    Param,
    Conv2d { x: NodeId, w: NodeId, b: NodeId, stride: usize, pad: usize },
    Relu { x: NodeId },
    LeakyRelu { x: NodeId, slope: f32 },
    Add { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    MulScalar { x: NodeId, s: f32 },
    AvgPool2 { x: NodeId },
    BilinearResize { x: NodeId, in_h: usize, in_w: usize },
    SoftmaxChannels { x: NodeId },
    ChannelNorm { x: NodeId, gamma: NodeId, beta: NodeId, stats: kernels::ChannelNormStats },
    Dropout { x: NodeId, mask: Tensor },
    Sum { x: NodeId },
    CrossEntropyMean { probs: NodeId, labels: ClassMap, mask: Option<PixelMask>, count: usize },
    EntropyMean { probs: NodeId },
}

struct Node {
    value: Tensor,
    op: Op,
    /// Flat offset for `Param` nodes.
    param_offset: usize,
}

/// One recorded forward pass.
pub struct Graph {
    nodes: Vec<Node>,
    param_space: usize,
}

impl Graph {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), param_space: 0 }
    }

    /// Reserve a flat parameter space of at least `p` scalars so that
    /// gradients come back with a fixed length even when some parameters
    /// never join the graph.
    pub fn with_param_space(p: usize) -> Self {
        Self { nodes: Vec::new(), param_space: p }
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

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op, param_offset: 0 });
        NodeId(self.nodes.len() - 1)
    }

    /// Constant input; no gradient is tracked past it.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Parameter leaf bound to `offset..offset+len` of the flat vector.
    pub fn param(&mut self, value: Tensor, offset: usize) -> NodeId {
        let end = offset + value.len();
        self.param_space = self.param_space.max(end);
        let id = self.push(value, Op::Param);
        self.nodes[id.0].param_offset = offset;
        id
    }

    pub fn conv2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId> {
        let out = kernels::conv2d_chw(
            self.value(x),
            self.value(w),
            self.value(b),
            stride,
            pad,
        )?;
        Ok(self.push(out, Op::Conv2d { x, w, b, stride, pad }))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out = ops::relu(self.value(x));
        self.push(out, Op::Relu { x })
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f32) -> NodeId {
        let out = ops::leaky_relu(self.value(x), slope);
        self.push(out, Op::LeakyRelu { x, slope })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = ops::add(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Add { a, b }))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = ops::mul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Mul { a, b }))
    }

    pub fn mul_scalar(&mut self, x: NodeId, s: f32) -> NodeId {
        let out = ops::mul_scalar(self.value(x), s);
        self.push(out, Op::MulScalar { x, s })
    }

    pub fn avg_pool2(&mut self, x: NodeId) -> Result<NodeId> {
        let out = kernels::avg_pool2(self.value(x))?;
        Ok(self.push(out, Op::AvgPool2 { x }))
    }

    pub fn bilinear_resize(&mut self, x: NodeId, new_h: usize, new_w: usize) -> Result<NodeId> {
        let (_, in_h, in_w) = self.value(x).chw()?;
        let out = kernels::bilinear_resize(self.value(x), new_h, new_w)?;
        Ok(self.push(out, Op::BilinearResize { x, in_h, in_w }))
    }

    pub fn softmax_channels(&mut self, x: NodeId) -> Result<NodeId> {
        let out = kernels::softmax_channels(self.value(x))?;
        Ok(self.push(out, Op::SoftmaxChannels { x }))
    }

    pub fn channel_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: f32,
    ) -> Result<NodeId> {
        let (out, stats) =
            kernels::channel_norm(self.value(x), self.value(gamma), self.value(beta), eps)?;
        Ok(self.push(out, Op::ChannelNorm { x, gamma, beta, stats }))
    }

    /// Dropout with inference-style scaling; the multiplicative mask is saved
    /// for the backward pass.
    pub fn dropout(&mut self, x: NodeId, rate: f32, rng: &mut ChaCha8Rng) -> Result<NodeId> {
        if rate == 0.0 {
            let out = self.value(x).clone();
            let mask = Tensor::full(out.shape(), 1.0);
            return Ok(self.push(out, Op::Dropout { x, mask }));
        }
        let mask = ops::dropout_mask(self.value(x).shape(), rate, rng)?;
        let out = ops::mul(self.value(x), &mask)?;
        Ok(self.push(out, Op::Dropout { x, mask }))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let out = Tensor::scalar(kernels::sum_fixed(self.value(x).data()));
        self.push(out, Op::Sum { x })
    }

    /// Mean over included pixels of `-ln(clamp(p[label], 1e-7, 1))`.
    ///
    /// Returns the scalar loss node and the number of pixels included; zero
    /// included pixels yields a loss of exactly 0 rather than NaN, and the
    /// caller decides what to do with that.
    pub fn cross_entropy_mean(
        &mut self,
        probs: NodeId,
        labels: &ClassMap,
        mask: Option<&PixelMask>,
    ) -> Result<(NodeId, usize)> {
        let (c, h, w) = self.value(probs).chw()?;
        if labels.height != h || labels.width != w {
            return Err(NumericsError::ShapeMismatch(format!(
                "labels are {}x{} but probabilities are {h}x{w}",
                labels.height, labels.width
            )));
        }
        if let Some(m) = mask {
            if m.height != h || m.width != w {
                return Err(NumericsError::ShapeMismatch(format!(
                    "pixel mask is {}x{} but probabilities are {h}x{w}",
                    m.height, m.width
                )));
            }
        }
        let hw = h * w;
        let p = self.value(probs).data();
        let mut count = 0usize;
        let mut acc = 0.0f64;
        for j in 0..hw {
            if let Some(m) = mask {
                if !m.data()[j] {
                    continue;
                }
            }
            let cls = labels.data()[j] as usize;
            if cls >= c {
                return Err(NumericsError::Contract(format!(
                    "label {cls} out of range for {c} classes"
                )));
            }
            let v = p[cls * hw + j].clamp(CLAMP_LO, 1.0);
            acc += -(v.ln() as f64);
            count += 1;
        }
        let loss = if count == 0 { 0.0 } else { (acc / count as f64) as f32 };
        let id = self.push(
            Tensor::scalar(loss),
            Op::CrossEntropyMean { probs, labels: labels.clone(), mask: mask.cloned(), count },
        );
        Ok((id, count))
    }

    /// Mean over all pixels of the prediction entropy `-Σ_c p ln(clamp(p))`.
    pub fn entropy_mean(&mut self, probs: NodeId) -> Result<NodeId> {
        let (c, h, w) = self.value(probs).chw()?;
        let hw = h * w;
        let p = self.value(probs).data();
        let mut acc = 0.0f64;
        for j in 0..hw {
            for ci in 0..c {
                let v = p[ci * hw + j];
                acc += -(v as f64) * (v.clamp(CLAMP_LO, 1.0).ln() as f64);
            }
        }
        let loss = (acc / hw as f64) as f32;
        Ok(self.push(Tensor::scalar(loss), Op::EntropyMean { probs }))
    }

    /// Reverse sweep from `loss`; returns ∂loss/∂θ for the whole flat
    /// parameter space (zeros for parameters off any path to the loss).
    pub fn backward(&self, loss: NodeId) -> Result<Vec<f32>> {
        if self.value(loss).len() != 1 {
            return Err(NumericsError::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut param_grads = vec![0.0f32; self.param_space];

        for id in (0..=loss.0).rev() {
            let Some(gy) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf => {}
                Op::Param => {
                    let off = node.param_offset;
                    for (dst, &g) in param_grads[off..off + gy.len()].iter_mut().zip(gy.data()) {
                        *dst += g;
                    }
                }
                Op::Conv2d { x, w, b, stride, pad } => {
                    let (dx, dw, db) = kernels::conv2d_chw_backward(
                        self.value(*x),
                        self.value(*w),
                        &gy,
                        *stride,
                        *pad,
                    )?;
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *w, dw);
                    accumulate(&mut grads, *b, db);
                }
                Op::Relu { x } => {
                    let dx = kernels::zip_binary(&gy, self.value(*x), |g, v| {
                        if v > 0.0 {
                            g
                        } else {
                            0.0
                        }
                    })?;
                    accumulate(&mut grads, *x, dx);
                }
                Op::LeakyRelu { x, slope } => {
                    let s = *slope;
                    let dx = kernels::zip_binary(&gy, self.value(*x), move |g, v| {
                        if v > 0.0 {
                            g
                        } else {
                            s * g
                        }
                    })?;
                    accumulate(&mut grads, *x, dx);
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads, *a, gy.clone());
                    accumulate(&mut grads, *b, gy);
                }
                Op::Mul { a, b } => {
                    let da = ops::mul(&gy, self.value(*b))?;
                    let db = ops::mul(&gy, self.value(*a))?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::MulScalar { x, s } => {
                    accumulate(&mut grads, *x, ops::mul_scalar(&gy, *s));
                }
                Op::AvgPool2 { x } => {
                    let (_, h, w) = self.value(*x).chw()?;
                    accumulate(&mut grads, *x, kernels::avg_pool2_backward(&gy, h, w)?);
                }
                Op::BilinearResize { x, in_h, in_w } => {
                    accumulate(&mut grads, *x, kernels::bilinear_resize_backward(&gy, *in_h, *in_w)?);
                }
                Op::SoftmaxChannels { x } => {
                    let dx = kernels::softmax_channels_backward(&node.value, &gy)?;
                    accumulate(&mut grads, *x, dx);
                }
                Op::ChannelNorm { x, gamma, beta, stats } => {
                    let (dx, dg, db) = kernels::channel_norm_backward(
                        self.value(*x),
                        self.value(*gamma),
                        stats,
                        &gy,
                    )?;
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *gamma, dg);
                    accumulate(&mut grads, *beta, db);
                }
                Op::Dropout { x, mask } => {
                    accumulate(&mut grads, *x, ops::mul(&gy, mask)?);
                }
                Op::Sum { x } => {
                    let g = gy.item();
                    accumulate(&mut grads, *x, Tensor::full(self.value(*x).shape(), g));
                }
                Op::CrossEntropyMean { probs, labels, mask, count } => {
                    if *count == 0 {
                        continue;
                    }
                    let g = gy.item() / *count as f32;
                    let (c, h, w) = self.value(*probs).chw()?;
                    let hw = h * w;
                    let p = self.value(*probs).data();
                    let mut dp = Tensor::zeros(&[c, h, w]);
                    for j in 0..hw {
                        if let Some(m) = mask {
                            if !m.data()[j] {
                                continue;
                            }
                        }
                        let cls = labels.data()[j] as usize;
                        let v = p[cls * hw + j];
                        // d(-ln(clamp(v)))/dv is -1/v inside the clamp window
                        // and 0 outside it.
                        if (CLAMP_LO..=1.0).contains(&v) {
                            dp.data_mut()[cls * hw + j] += g * (-1.0 / v);
                        }
                    }
                    accumulate(&mut grads, *probs, dp);
                }
                Op::EntropyMean { probs } => {
                    let (c, h, w) = self.value(*probs).chw()?;
                    let hw = h * w;
                    let g = gy.item() / hw as f32;
                    let p = self.value(*probs).data();
                    let mut dp = Tensor::zeros(&[c, h, w]);
                    for (dst, &v) in dp.data_mut().iter_mut().zip(p) {
                        let clamped = v.clamp(CLAMP_LO, 1.0);
                        let inside = (CLAMP_LO..=1.0).contains(&v);
                        // d/dv of -v ln(clamp(v)) = -ln(clamp(v)) - v/clamp(v)·[inside]
                        *dst = g * (-clamped.ln() - if inside { 1.0 } else { 0.0 });
                    }
                    accumulate(&mut grads, *probs, dp);
                }
            }
        }
        Ok(param_grads)
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, delta: Tensor) {
    match &mut grads[id.0] {
        Some(existing) => {
            for (dst, &d) in existing.data_mut().iter_mut().zip(delta.data()) {
                *dst += d;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}
