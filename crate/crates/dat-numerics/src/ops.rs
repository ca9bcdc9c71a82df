//! Tensor-level operations. These are the inference-path entry points; the
//! tape in [`crate::tape`] wraps the same kernels for differentiable use.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{NumericsError, Result};
use crate::kernels;
use crate::mask::ClassMap;
use crate::tensor::Tensor;

/// 2-D convolution. Accepts `[C,H,W]` or batched `[N,C,H,W]` input.
pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    match input.shape() {
        [_, _, _] => kernels::conv2d_chw(input, weight, bias, stride, pad),
        [n, c, h, w] => {
            let (n, c, h, w) = (*n, *c, *h, *w);
            let plane = c * h * w;
            let mut out_data: Vec<f32> = Vec::new();
            let mut out_shape = (0usize, 0usize);
            for i in 0..n {
                let item = Tensor::new(&[c, h, w], input.data()[i * plane..(i + 1) * plane].to_vec())?;
                let o = kernels::conv2d_chw(&item, weight, bias, stride, pad)?;
                let (co, ho, wo) = o.chw()?;
                out_shape = (ho, wo);
                let _ = co;
                out_data.extend_from_slice(o.data());
            }
            Tensor::new(&[n, weight.shape()[0], out_shape.0, out_shape.1], out_data)
        }
        s => Err(NumericsError::ShapeMismatch(format!(
            "conv2d input must be [C,H,W] or [N,C,H,W], got {s:?}"
        ))),
    }
}

pub fn relu(input: &Tensor) -> Tensor {
    kernels::map_unary(input, |v| if v > 0.0 { v } else { 0.0 })
}

pub fn leaky_relu(input: &Tensor, slope: f32) -> Tensor {
    kernels::map_unary(input, move |v| if v > 0.0 { v } else { slope * v })
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    kernels::zip_binary(a, b, |x, y| x + y)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    kernels::zip_binary(a, b, |x, y| x * y)
}

pub fn mul_scalar(input: &Tensor, s: f32) -> Tensor {
    kernels::map_unary(input, move |v| v * s)
}

pub fn bilinear_resize(input: &Tensor, new_h: usize, new_w: usize) -> Result<Tensor> {
    kernels::bilinear_resize(input, new_h, new_w)
}

pub fn softmax_over_channels(input: &Tensor) -> Result<Tensor> {
    kernels::softmax_channels(input)
}

/// Per-channel affine normalization over the spatial dims.
pub fn channel_norm(input: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f32) -> Result<Tensor> {
    kernels::channel_norm(input, gamma, beta, eps).map(|(t, _)| t)
}

/// Multiplicative dropout mask: each entry is `0` with probability `rate`,
/// else `1/(1-rate)`, so the masked output is an unbiased estimate of the
/// unmasked one.
pub fn dropout_mask(shape: &[usize], rate: f32, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NumericsError::InvalidParameter(format!(
            "dropout rate must be in [0,1), got {rate}"
        )));
    }
    let keep_scale = 1.0 / (1.0 - rate);
    Ok(Tensor::from_fn(shape, |_| {
        let u: f32 = rng.gen::<f32>();
        if u < rate {
            0.0
        } else {
            keep_scale
        }
    }))
}

/// Apply dropout with a named, seeded generator.
pub fn dropout(input: &Tensor, rate: f32, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    if rate == 0.0 {
        return Ok(input.clone());
    }
    let mask = dropout_mask(input.shape(), rate, rng)?;
    mul(input, &mask)
}

/// Per-pixel argmax over the channel axis; ties resolve to the lowest class.
pub fn argmax_channels(probs: &Tensor) -> Result<ClassMap> {
    let (c, h, w) = probs.chw()?;
    let hw = h * w;
    let p = probs.data();
    let mut map = ClassMap::new(h, w);
    for base in 0..hw {
        let mut best = 0usize;
        let mut best_v = p[base];
        for ci in 1..c {
            let v = p[ci * hw + base];
            if v > best_v {
                best_v = v;
                best = ci;
            }
        }
        map.data_mut()[base] = best as u8;
    }
    Ok(map)
}
