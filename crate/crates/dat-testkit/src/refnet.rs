//! f64 reference network interpreter for finite-difference gradient checks.
//!
//! A [`RefNet`] describes the same computation a production tape would run,
//! but it is evaluated here in f64 with the direct formulas from the crate
//! root. Central differences over this evaluator give an oracle gradient
//! whose own noise floor sits far below f32 autodiff error.

use crate::{bilinear_oracle, conv2d_oracle, RTensor};

const CLAMP_LO: f64 = 1e-7;

#[derive(Clone)]
pub enum RNode {
    Input(RTensor),
    /// Reads `shape.product()` values from the flat parameter vector.
    Param { offset: usize, shape: Vec<usize> },
    Conv2d { x: usize, w: usize, b: usize, stride: usize, pad: usize },
    Relu(usize),
    LeakyRelu(usize, f64),
    Add(usize, usize),
    Mul(usize, usize),
    MulScalar(usize, f64),
    AvgPool2(usize),
    BilinearResize { x: usize, h: usize, w: usize },
    SoftmaxChannels(usize),
    ChannelNorm { x: usize, gamma: usize, beta: usize, eps: f64 },
    /// Multiplies by a fixed mask (mirrors a recorded dropout mask).
    MaskMul { x: usize, mask: Vec<f64> },
    Sum(usize),
    CrossEntropyMean { probs: usize, labels: Vec<u8>, mask: Option<Vec<bool>> },
    EntropyMean(usize),
}

#[derive(Default, Clone)]
pub struct RefNet {
    pub nodes: Vec<RNode>,
}

impl RefNet {
    pub fn push(&mut self, node: RNode) -> usize {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    /// Evaluate every node; the last node must be scalar and is the loss.
    pub fn eval_loss(&self, params: &[f64]) -> f64 {
        let values = self.eval(params);
        let last = values.last().expect("empty refnet");
        assert_eq!(last.data.len(), 1, "refnet loss must be scalar");
        last.data[0]
    }

    pub fn eval(&self, params: &[f64]) -> Vec<RTensor> {
        let mut vals: Vec<RTensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let out = match node {
                RNode::Input(t) => t.clone(),
                RNode::Param { offset, shape } => {
                    let n: usize = shape.iter().product();
                    RTensor::new(shape, params[*offset..offset + n].to_vec())
                }
                RNode::Conv2d { x, w, b, stride, pad } => {
                    conv2d_oracle(&vals[*x], &vals[*w], &vals[*b].data, *stride, *pad)
                }
                RNode::Relu(x) => map(&vals[*x], |v| if v > 0.0 { v } else { 0.0 }),
                RNode::LeakyRelu(x, s) => {
                    let s = *s;
                    map(&vals[*x], move |v| if v > 0.0 { v } else { s * v })
                }
                RNode::Add(a, b) => zip(&vals[*a], &vals[*b], |x, y| x + y),
                RNode::Mul(a, b) => zip(&vals[*a], &vals[*b], |x, y| x * y),
                RNode::MulScalar(x, s) => {
                    let s = *s;
                    map(&vals[*x], move |v| v * s)
                }
                RNode::AvgPool2(x) => avg_pool2(&vals[*x]),
                RNode::BilinearResize { x, h, w } => bilinear_oracle(&vals[*x], *h, *w),
                RNode::SoftmaxChannels(x) => softmax_channels(&vals[*x]),
                RNode::ChannelNorm { x, gamma, beta, eps } => {
                    channel_norm(&vals[*x], &vals[*gamma].data, &vals[*beta].data, *eps)
                }
                RNode::MaskMul { x, mask } => {
                    let src = &vals[*x];
                    RTensor::new(
                        &src.shape,
                        src.data.iter().zip(mask).map(|(&v, &m)| v * m).collect(),
                    )
                }
                RNode::Sum(x) => RTensor::new(&[], vec![vals[*x].data.iter().sum()]),
                RNode::CrossEntropyMean { probs, labels, mask } => {
                    RTensor::new(&[], vec![cross_entropy_mean(&vals[*probs], labels, mask.as_deref())])
                }
                RNode::EntropyMean(x) => RTensor::new(&[], vec![entropy_mean(&vals[*x])]),
            };
            vals.push(out);
        }
        vals
    }
}

/// Central finite differences of the loss w.r.t. every parameter.
pub fn central_diff_grad(net: &RefNet, params: &[f64], h: f64) -> Vec<f64> {
    let mut scratch = params.to_vec();
    let mut grad = vec![0.0; params.len()];
    for i in 0..params.len() {
        let orig = scratch[i];
        scratch[i] = orig + h;
        let up = net.eval_loss(&scratch);
        scratch[i] = orig - h;
        let down = net.eval_loss(&scratch);
        scratch[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    grad
}

fn map(t: &RTensor, f: impl Fn(f64) -> f64) -> RTensor {
    RTensor::new(&t.shape, t.data.iter().map(|&v| f(v)).collect())
}

fn zip(a: &RTensor, b: &RTensor, f: impl Fn(f64, f64) -> f64) -> RTensor {
    assert_eq!(a.shape, b.shape);
    RTensor::new(
        &a.shape,
        a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    )
}

fn avg_pool2(t: &RTensor) -> RTensor {
    let (c, h, w) = (t.shape[0], t.shape[1], t.shape[2]);
    let (ho, wo) = (h / 2, w / 2);
    let mut out = RTensor::zeros(&[c, ho, wo]);
    for ci in 0..c {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = 0.0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        acc += t.data[ci * h * w + (2 * oy + dy) * w + 2 * ox + dx];
                    }
                }
                out.data[ci * ho * wo + oy * wo + ox] = acc / 4.0;
            }
        }
    }
    out
}

fn softmax_channels(t: &RTensor) -> RTensor {
    let (c, h, w) = (t.shape[0], t.shape[1], t.shape[2]);
    let hw = h * w;
    let mut out = RTensor::zeros(&t.shape);
    for j in 0..hw {
        let mut maxv = f64::NEG_INFINITY;
        for ci in 0..c {
            maxv = maxv.max(t.data[ci * hw + j]);
        }
        let mut sum = 0.0;
        for ci in 0..c {
            let e = (t.data[ci * hw + j] - maxv).exp();
            out.data[ci * hw + j] = e;
            sum += e;
        }
        for ci in 0..c {
            out.data[ci * hw + j] /= sum;
        }
    }
    out
}

fn channel_norm(t: &RTensor, gamma: &[f64], beta: &[f64], eps: f64) -> RTensor {
    let (c, h, w) = (t.shape[0], t.shape[1], t.shape[2]);
    let hw = h * w;
    let mut out = RTensor::zeros(&t.shape);
    for ci in 0..c {
        let plane = &t.data[ci * hw..(ci + 1) * hw];
        let mean = plane.iter().sum::<f64>() / hw as f64;
        let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / hw as f64;
        let inv = 1.0 / (var + eps).sqrt();
        for (o, &v) in out.data[ci * hw..(ci + 1) * hw].iter_mut().zip(plane) {
            *o = gamma[ci] * ((v - mean) * inv) + beta[ci];
        }
    }
    out
}

fn cross_entropy_mean(probs: &RTensor, labels: &[u8], mask: Option<&[bool]>) -> f64 {
    let (c, h, w) = (probs.shape[0], probs.shape[1], probs.shape[2]);
    let hw = h * w;
    let _ = c;
    let mut acc = 0.0;
    let mut count = 0usize;
    for j in 0..hw {
        if let Some(m) = mask {
            if !m[j] {
                continue;
            }
        }
        let v = probs.data[labels[j] as usize * hw + j].clamp(CLAMP_LO, 1.0);
        acc += -v.ln();
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        acc / count as f64
    }
}

fn entropy_mean(probs: &RTensor) -> f64 {
    let hw = probs.shape[1] * probs.shape[2];
    let mut acc = 0.0;
    for &v in &probs.data {
        acc += -v * v.clamp(CLAMP_LO, 1.0).ln();
    }
    acc / hw as f64
}
