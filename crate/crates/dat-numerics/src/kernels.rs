//! Low-level compute kernels.
//!
//! Every kernel is bitwise deterministic: reductions run in a fixed
//! left-to-right order (an 8-lane accumulator with a fixed combine tree for
//! the hot loops), and the rayon paths only parallelize over disjoint output
//! regions whose per-element computation is identical to the sequential
//! path. `parallel` and sequential builds therefore produce identical bits,
//! which `tests/determinism.rs` checks.

use crate::error::{NumericsError, Result};
use crate::tensor::Tensor;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Minimum number of output rows before the parallel path pays off.
#[cfg(feature = "parallel")]
const PAR_ROW_THRESHOLD: usize = 4;

// ── Fixed-order reductions ───────────────────────────────────────────

/// Sum with 8 partial lanes and a fixed combine tree.
pub fn sum_fixed(xs: &[f32]) -> f32 {
    let chunks = xs.chunks_exact(8);
    let rem = chunks.remainder();
    let mut acc = [0.0f32; 8];
    for ch in chunks {
        for i in 0..8 {
            acc[i] += ch[i];
        }
    }
    let mut tail = 0.0f32;
    for &x in rem {
        tail += x;
    }
    (((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))) + tail
}

/// Dot product with the same lane structure as [`sum_fixed`].
pub fn dot_fixed(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let ra = ca.remainder();
    let rb = cb.remainder();
    let mut acc = [0.0f32; 8];
    for (xa, xb) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += xa[i] * xb[i];
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))) + tail
}

// ── Matrix kernels ───────────────────────────────────────────────────

#[inline]
fn mm_row(c_row: &mut [f32], a_row: &[f32], b: &[f32], n: usize) {
    for (k, &av) in a_row.iter().enumerate() {
        let b_row = &b[k * n..k * n + n];
        for (cv, &bv) in c_row.iter_mut().zip(b_row) {
            *cv += av * bv;
        }
    }
}

/// `c[m][n] += a[m][k] · b[k][n]`, row-major. Sequential.
pub fn matmul_acc_seq(c: &mut [f32], a: &[f32], b: &[f32], m: usize, k: usize, n: usize) {
    debug_assert_eq!(c.len(), m * n);
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    for (c_row, a_row) in c.chunks_exact_mut(n).zip(a.chunks_exact(k)) {
        mm_row(c_row, a_row, b, n);
    }
}

/// `c[m][n] += a[m][k] · b[k][n]`; parallel over output rows when enabled.
pub fn matmul_acc(c: &mut [f32], a: &[f32], b: &[f32], m: usize, k: usize, n: usize) {
    #[cfg(feature = "parallel")]
    if m >= PAR_ROW_THRESHOLD {
        debug_assert_eq!(c.len(), m * n);
        c.par_chunks_exact_mut(n)
            .zip(a.par_chunks_exact(k))
            .for_each(|(c_row, a_row)| mm_row(c_row, a_row, b, n));
        return;
    }
    matmul_acc_seq(c, a, b, m, k, n);
}

#[inline]
fn mm_nt_row(c_row: &mut [f32], a_row: &[f32], b: &[f32], k: usize) {
    for (cv, b_row) in c_row.iter_mut().zip(b.chunks_exact(k)) {
        *cv += dot_fixed(a_row, b_row);
    }
}

/// `c[m][j] += a[m][k] · b[j][k]` (i.e. `C += A · Bᵀ`). Sequential.
pub fn matmul_nt_acc_seq(c: &mut [f32], a: &[f32], b: &[f32], m: usize, k: usize, j: usize) {
    debug_assert_eq!(c.len(), m * j);
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), j * k);
    for (c_row, a_row) in c.chunks_exact_mut(j).zip(a.chunks_exact(k)) {
        mm_nt_row(c_row, a_row, b, k);
    }
}

/// `C += A · Bᵀ`; parallel over output rows when enabled.
pub fn matmul_nt_acc(c: &mut [f32], a: &[f32], b: &[f32], m: usize, k: usize, j: usize) {
    #[cfg(feature = "parallel")]
    if m >= PAR_ROW_THRESHOLD {
        c.par_chunks_exact_mut(j)
            .zip(a.par_chunks_exact(k))
            .for_each(|(c_row, a_row)| mm_nt_row(c_row, a_row, b, k));
        return;
    }
    matmul_nt_acc_seq(c, a, b, m, k, j);
}

// ── Convolution ──────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy)]
pub struct ConvDims {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvDims {
    pub fn infer(
        input_shape: &[usize],
        weight_shape: &[usize],
        bias_len: usize,
        stride: usize,
        pad: usize,
    ) -> Result<ConvDims> {
        let [c_in, h, w] = match input_shape {
            [c, h, w] => [*c, *h, *w],
            s => {
                return Err(NumericsError::ShapeMismatch(format!(
                    "conv2d input must be [C,H,W], got {s:?}"
                )))
            }
        };
        let [c_out, wc_in, kh, kw] = match weight_shape {
            [a, b, c, d] => [*a, *b, *c, *d],
            s => {
                return Err(NumericsError::ShapeMismatch(format!(
                    "conv2d weight must be [C_out,C_in,k,k], got {s:?}"
                )))
            }
        };
        if kh != kw {
            return Err(NumericsError::ShapeMismatch(format!(
                "conv2d kernel must be square, got {kh}x{kw}"
            )));
        }
        let k = kh;
        if k % 2 == 0 {
            return Err(NumericsError::InvalidParameter(format!(
                "conv2d kernel size must be odd, got {k}"
            )));
        }
        if stride == 0 {
            return Err(NumericsError::InvalidParameter("conv2d stride must be >= 1".into()));
        }
        if wc_in != c_in {
            return Err(NumericsError::ShapeMismatch(format!(
                "conv2d input has {c_in} channels but weight expects {wc_in}"
            )));
        }
        if bias_len != c_out {
            return Err(NumericsError::ShapeMismatch(format!(
                "conv2d bias has {bias_len} entries but weight produces {c_out} channels"
            )));
        }
        if h + 2 * pad < k || w + 2 * pad < k {
            return Err(NumericsError::ShapeMismatch(format!(
                "conv2d input {h}x{w} (pad {pad}) smaller than kernel {k}"
            )));
        }
        let h_out = (h + 2 * pad - k) / stride + 1;
        let w_out = (w + 2 * pad - k) / stride + 1;
        Ok(ConvDims { c_in, h, w, c_out, k, stride, pad, h_out, w_out })
    }

    fn patch_len(&self) -> usize {
        self.c_in * self.k * self.k
    }

    fn out_len(&self) -> usize {
        self.h_out * self.w_out
    }
}

#[inline]
fn im2col_row(row: &mut [f32], input: &[f32], d: &ConvDims, r: usize) {
    let kk = d.k * d.k;
    let ci = r / kk;
    let ky = (r % kk) / d.k;
    let kx = r % d.k;
    let plane = &input[ci * d.h * d.w..(ci + 1) * d.h * d.w];
    for oy in 0..d.h_out {
        let iy = (oy * d.stride + ky) as isize - d.pad as isize;
        let out_row = &mut row[oy * d.w_out..(oy + 1) * d.w_out];
        if iy < 0 || iy >= d.h as isize {
            out_row.fill(0.0);
            continue;
        }
        let in_row = &plane[iy as usize * d.w..(iy as usize + 1) * d.w];
        if d.stride == 1 {
            // ix = ox + kx - pad forms one contiguous run.
            let shift = kx as isize - d.pad as isize;
            let ox_lo = (-shift).max(0) as usize;
            let ox_hi = ((d.w as isize - shift).min(d.w_out as isize)).max(0) as usize;
            out_row[..ox_lo.min(d.w_out)].fill(0.0);
            if ox_lo < ox_hi {
                let src_lo = (ox_lo as isize + shift) as usize;
                out_row[ox_lo..ox_hi].copy_from_slice(&in_row[src_lo..src_lo + (ox_hi - ox_lo)]);
            }
            out_row[ox_hi.max(ox_lo)..].fill(0.0);
        } else {
            for (ox, v) in out_row.iter_mut().enumerate() {
                let ix = (ox * d.stride + kx) as isize - d.pad as isize;
                *v = if ix < 0 || ix >= d.w as isize {
                    0.0
                } else {
                    in_row[ix as usize]
                };
            }
        }
    }
}

/// Unfold `input` into a `[C_in·k·k, H'·W']` patch matrix.
pub fn im2col(input: &[f32], d: &ConvDims, cols: &mut [f32]) {
    let n = d.out_len();
    debug_assert_eq!(cols.len(), d.patch_len() * n);
    #[cfg(feature = "parallel")]
    {
        cols.par_chunks_exact_mut(n)
            .enumerate()
            .for_each(|(r, row)| im2col_row(row, input, d, r));
        return;
    }
    #[cfg(not(feature = "parallel"))]
    for (r, row) in cols.chunks_exact_mut(n).enumerate() {
        im2col_row(row, input, d, r);
    }
}

#[inline]
fn col2im_channel(dx_plane: &mut [f32], dcols: &[f32], d: &ConvDims, ci: usize) {
    let n = d.out_len();
    let kk = d.k * d.k;
    for kidx in 0..kk {
        let ky = kidx / d.k;
        let kx = kidx % d.k;
        let row = &dcols[(ci * kk + kidx) * n..(ci * kk + kidx + 1) * n];
        for oy in 0..d.h_out {
            let iy = (oy * d.stride + ky) as isize - d.pad as isize;
            if iy < 0 || iy >= d.h as isize {
                continue;
            }
            let src = &row[oy * d.w_out..(oy + 1) * d.w_out];
            let dst = &mut dx_plane[iy as usize * d.w..(iy as usize + 1) * d.w];
            for (ox, &v) in src.iter().enumerate() {
                let ix = (ox * d.stride + kx) as isize - d.pad as isize;
                if ix >= 0 && (ix as usize) < d.w {
                    dst[ix as usize] += v;
                }
            }
        }
    }
}

/// Fold a patch-gradient matrix back onto the input gradient.
pub fn col2im_acc(dcols: &[f32], d: &ConvDims, dx: &mut [f32]) {
    debug_assert_eq!(dx.len(), d.c_in * d.h * d.w);
    let hw = d.h * d.w;
    #[cfg(feature = "parallel")]
    {
        dx.par_chunks_exact_mut(hw)
            .enumerate()
            .for_each(|(ci, plane)| col2im_channel(plane, dcols, d, ci));
        return;
    }
    #[cfg(not(feature = "parallel"))]
    for (ci, plane) in dx.chunks_exact_mut(hw).enumerate() {
        col2im_channel(plane, dcols, d, ci);
    }
}

/// 2-D convolution over a `[C,H,W]` tensor.
pub fn conv2d_chw(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let d = ConvDims::infer(input.shape(), weight.shape(), bias.len(), stride, pad)?;
    let n = d.out_len();
    let mut cols = vec![0.0f32; d.patch_len() * n];
    im2col(input.data(), &d, &mut cols);
    let mut out = vec![0.0f32; d.c_out * n];
    for (co, out_row) in out.chunks_exact_mut(n).enumerate() {
        out_row.fill(bias.data()[co]);
    }
    matmul_acc(&mut out, weight.data(), &cols, d.c_out, d.patch_len(), n);
    Tensor::new(&[d.c_out, d.h_out, d.w_out], out)
}

/// Gradients of [`conv2d_chw`] w.r.t. input, weight, and bias.
pub fn conv2d_chw_backward(
    input: &Tensor,
    weight: &Tensor,
    d_out: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<(Tensor, Tensor, Tensor)> {
    let c_out = weight.shape()[0];
    let d = ConvDims::infer(input.shape(), weight.shape(), c_out, stride, pad)?;
    let n = d.out_len();
    let kp = d.patch_len();
    debug_assert_eq!(d_out.len(), d.c_out * n);

    // Patches are recomputed instead of saved; the tape stays lean.
    let mut cols = vec![0.0f32; kp * n];
    im2col(input.data(), &d, &mut cols);

    let mut d_weight = vec![0.0f32; d.c_out * kp];
    matmul_nt_acc(&mut d_weight, d_out.data(), &cols, d.c_out, n, kp);

    let d_bias: Vec<f32> = d_out
        .data()
        .chunks_exact(n)
        .map(sum_fixed)
        .collect();

    // dcols[kp][n] = Wᵀ · dY, accumulated row by row.
    let mut dcols = vec![0.0f32; kp * n];
    let w = weight.data();
    let dy = d_out.data();
    let fill_row = |(r, row): (usize, &mut [f32])| {
        for co in 0..d.c_out {
            let wv = w[co * kp + r];
            let dy_row = &dy[co * n..(co + 1) * n];
            for (acc, &g) in row.iter_mut().zip(dy_row) {
                *acc += wv * g;
            }
        }
    };
    #[cfg(feature = "parallel")]
    dcols.par_chunks_exact_mut(n).enumerate().for_each(|p| fill_row((p.0, p.1)));
    #[cfg(not(feature = "parallel"))]
    dcols.chunks_exact_mut(n).enumerate().for_each(|p| fill_row((p.0, p.1)));

    let mut dx = vec![0.0f32; d.c_in * d.h * d.w];
    col2im_acc(&dcols, &d, &mut dx);

    Ok((
        Tensor::new(&[d.c_in, d.h, d.w], dx)?,
        Tensor::new(weight.shape(), d_weight)?,
        Tensor::new(&[d.c_out], d_bias)?,
    ))
}

// ── Pooling and resizing ─────────────────────────────────────────────

/// 2×2 average pooling with stride 2. H and W must be even.
pub fn avg_pool2(input: &Tensor) -> Result<Tensor> {
    let (c, h, w) = input.chw()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(NumericsError::ShapeMismatch(format!(
            "avg_pool2 needs even spatial dims, got {h}x{w}"
        )));
    }
    let (ho, wo) = (h / 2, w / 2);
    let x = input.data();
    let mut out = vec![0.0f32; c * ho * wo];
    let pool_plane = |(ci, plane): (usize, &mut [f32])| {
        let src = &x[ci * h * w..(ci + 1) * h * w];
        for oy in 0..ho {
            let r0 = &src[(2 * oy) * w..(2 * oy + 1) * w];
            let r1 = &src[(2 * oy + 1) * w..(2 * oy + 2) * w];
            for ox in 0..wo {
                plane[oy * wo + ox] =
                    ((r0[2 * ox] + r0[2 * ox + 1]) + (r1[2 * ox] + r1[2 * ox + 1])) * 0.25;
            }
        }
    };
    #[cfg(feature = "parallel")]
    out.par_chunks_exact_mut(ho * wo).enumerate().for_each(|p| pool_plane((p.0, p.1)));
    #[cfg(not(feature = "parallel"))]
    out.chunks_exact_mut(ho * wo).enumerate().for_each(|p| pool_plane((p.0, p.1)));
    Tensor::new(&[c, ho, wo], out)
}

pub fn avg_pool2_backward(d_out: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let (c, ho, wo) = d_out.chw()?;
    let dy = d_out.data();
    let mut dx = vec![0.0f32; c * h * w];
    let unpool = |(ci, plane): (usize, &mut [f32])| {
        let src = &dy[ci * ho * wo..(ci + 1) * ho * wo];
        for oy in 0..ho {
            for ox in 0..wo {
                let g = src[oy * wo + ox] * 0.25;
                plane[(2 * oy) * w + 2 * ox] += g;
                plane[(2 * oy) * w + 2 * ox + 1] += g;
                plane[(2 * oy + 1) * w + 2 * ox] += g;
                plane[(2 * oy + 1) * w + 2 * ox + 1] += g;
            }
        }
    };
    #[cfg(feature = "parallel")]
    dx.par_chunks_exact_mut(h * w).enumerate().for_each(|p| unpool((p.0, p.1)));
    #[cfg(not(feature = "parallel"))]
    dx.chunks_exact_mut(h * w).enumerate().for_each(|p| unpool((p.0, p.1)));
    Tensor::new(&[c, h, w], dx)
}

/// Four-tap weights for one output coordinate (half-pixel-centres mapping).
#[inline]
fn bilinear_taps(o: usize, in_len: usize, out_len: usize) -> (usize, usize, f32) {
    let scale = in_len as f32 / out_len as f32;
    let src = (o as f32 + 0.5) * scale - 0.5;
    let src = src.clamp(0.0, (in_len - 1) as f32);
    let lo = src.floor() as usize;
    let hi = (lo + 1).min(in_len - 1);
    (lo, hi, src - lo as f32)
}

/// Bilinear resize of a `[C,H,W]` tensor. Exact for constant inputs because
/// interpolation is evaluated in lerp form.
pub fn bilinear_resize(input: &Tensor, new_h: usize, new_w: usize) -> Result<Tensor> {
    let (c, h, w) = input.chw()?;
    if new_h == 0 || new_w == 0 {
        return Err(NumericsError::InvalidParameter("bilinear_resize target must be non-empty".into()));
    }
    if h == new_h && w == new_w {
        return Ok(input.clone());
    }
    let x = input.data();
    let mut out = vec![0.0f32; c * new_h * new_w];
    let x_taps: Vec<(usize, usize, f32)> =
        (0..new_w).map(|ox| bilinear_taps(ox, w, new_w)).collect();
    let resize_plane = |(ci, plane): (usize, &mut [f32])| {
        let src = &x[ci * h * w..(ci + 1) * h * w];
        for oy in 0..new_h {
            let (y0, y1, wy) = bilinear_taps(oy, h, new_h);
            let row0 = &src[y0 * w..y0 * w + w];
            let row1 = &src[y1 * w..y1 * w + w];
            let dst = &mut plane[oy * new_w..(oy + 1) * new_w];
            for (ox, v) in dst.iter_mut().enumerate() {
                let (x0, x1, wx) = x_taps[ox];
                let top = row0[x0] + wx * (row0[x1] - row0[x0]);
                let bot = row1[x0] + wx * (row1[x1] - row1[x0]);
                *v = top + wy * (bot - top);
            }
        }
    };
    #[cfg(feature = "parallel")]
    out.par_chunks_exact_mut(new_h * new_w).enumerate().for_each(|p| resize_plane((p.0, p.1)));
    #[cfg(not(feature = "parallel"))]
    out.chunks_exact_mut(new_h * new_w).enumerate().for_each(|p| resize_plane((p.0, p.1)));
    Tensor::new(&[c, new_h, new_w], out)
}

pub fn bilinear_resize_backward(d_out: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let (c, ho, wo) = d_out.chw()?;
    if ho == h && wo == w {
        return Ok(d_out.clone());
    }
    let dy = d_out.data();
    let mut dx = vec![0.0f32; c * h * w];
    let x_taps: Vec<(usize, usize, f32)> = (0..wo).map(|ox| bilinear_taps(ox, w, wo)).collect();
    let scatter_plane = |(ci, plane): (usize, &mut [f32])| {
        let src = &dy[ci * ho * wo..(ci + 1) * ho * wo];
        for oy in 0..ho {
            let (y0, y1, wy) = bilinear_taps(oy, h, ho);
            for ox in 0..wo {
                let (x0, x1, wx) = x_taps[ox];
                let g = src[oy * wo + ox];
                plane[y0 * w + x0] += g * (1.0 - wy) * (1.0 - wx);
                plane[y0 * w + x1] += g * (1.0 - wy) * wx;
                plane[y1 * w + x0] += g * wy * (1.0 - wx);
                plane[y1 * w + x1] += g * wy * wx;
            }
        }
    };
    #[cfg(feature = "parallel")]
    dx.par_chunks_exact_mut(h * w).enumerate().for_each(|p| scatter_plane((p.0, p.1)));
    #[cfg(not(feature = "parallel"))]
    dx.chunks_exact_mut(h * w).enumerate().for_each(|p| scatter_plane((p.0, p.1)));
    Tensor::new(&[c, h, w], dx)
}

// ── Softmax and normalization ────────────────────────────────────────

/// Per-pixel softmax over the channel axis of a `[C,H,W]` tensor.
/// Channel values for one pixel are strided by H·W; exp dominates the cost,
/// so this stays a plain pixel loop.
pub fn softmax_channels(input: &Tensor) -> Result<Tensor> {
    let (c, h, w) = input.chw()?;
    let hw = h * w;
    let x = input.data();
    let mut out = vec![0.0f32; c * hw];
    for base in 0..hw {
        let mut maxv = x[base];
        for ci in 1..c {
            let v = x[ci * hw + base];
            if v > maxv {
                maxv = v;
            }
        }
        let mut sum = 0.0f32;
        for ci in 0..c {
            let e = (x[ci * hw + base] - maxv).exp();
            out[ci * hw + base] = e;
            sum += e;
        }
        let inv = 1.0 / sum;
        for ci in 0..c {
            out[ci * hw + base] *= inv;
        }
    }
    Tensor::new(&[c, h, w], out)
}

/// Backward of [`softmax_channels`]: `dx_c = p_c (dy_c − Σ_j p_j dy_j)`.
pub fn softmax_channels_backward(probs: &Tensor, d_out: &Tensor) -> Result<Tensor> {
    let (c, h, w) = probs.chw()?;
    let hw = h * w;
    let p = probs.data();
    let dy = d_out.data();
    let mut dx = vec![0.0f32; c * hw];
    for base in 0..hw {
        let mut dotv = 0.0f32;
        for ci in 0..c {
            dotv += p[ci * hw + base] * dy[ci * hw + base];
        }
        for ci in 0..c {
            dx[ci * hw + base] = p[ci * hw + base] * (dy[ci * hw + base] - dotv);
        }
    }
    Tensor::new(&[c, h, w], dx)
}

/// Saved statistics from a channel-norm forward pass.
#[derive(Debug, Clone)]
pub struct ChannelNormStats {
    pub mean: Vec<f32>,
    pub inv_std: Vec<f32>,
}

/// Per-channel normalization over the spatial dims with affine scale/shift.
/// No batch statistics are involved.
pub fn channel_norm(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f32,
) -> Result<(Tensor, ChannelNormStats)> {
    let (c, h, w) = input.chw()?;
    if gamma.len() != c || beta.len() != c {
        return Err(NumericsError::ShapeMismatch(format!(
            "channel_norm affine params must have {c} entries, got {} and {}",
            gamma.len(),
            beta.len()
        )));
    }
    let hw = h * w;
    let n_inv = 1.0 / hw as f32;
    let x = input.data();
    let g = gamma.data();
    let b = beta.data();
    let mut out = vec![0.0f32; c * hw];
    let mut mean = vec![0.0f32; c];
    let mut inv_std = vec![0.0f32; c];

    struct Stat {
        m: f32,
        s: f32,
    }
    let norm_plane = |(ci, plane): (usize, &mut [f32])| -> Stat {
        let src = &x[ci * hw..(ci + 1) * hw];
        let m = sum_fixed(src) * n_inv;
        let mut dev: Vec<f32> = Vec::new();
        let _ = &mut dev;
        let mut var_lanes = [0.0f32; 8];
        let chunks = src.chunks_exact(8);
        let rem = chunks.remainder();
        for ch in chunks {
            for i in 0..8 {
                let d = ch[i] - m;
                var_lanes[i] += d * d;
            }
        }
        let mut tail = 0.0f32;
        for &v in rem {
            let d = v - m;
            tail += d * d;
        }
        let var = ((((var_lanes[0] + var_lanes[1]) + (var_lanes[2] + var_lanes[3]))
            + ((var_lanes[4] + var_lanes[5]) + (var_lanes[6] + var_lanes[7])))
            + tail)
            * n_inv;
        let is = 1.0 / (var + eps).sqrt();
        let (gc, bc) = (g[ci], b[ci]);
        for (o, &v) in plane.iter_mut().zip(src) {
            *o = gc * ((v - m) * is) + bc;
        }
        Stat { m, s: is }
    };

    #[cfg(feature = "parallel")]
    {
        let stats: Vec<Stat> = out
            .par_chunks_exact_mut(hw)
            .enumerate()
            .map(|(ci, plane)| norm_plane((ci, plane)))
            .collect();
        for (ci, st) in stats.into_iter().enumerate() {
            mean[ci] = st.m;
            inv_std[ci] = st.s;
        }
    }
    #[cfg(not(feature = "parallel"))]
    for (ci, plane) in out.chunks_exact_mut(hw).enumerate() {
        let st = norm_plane((ci, plane));
        mean[ci] = st.m;
        inv_std[ci] = st.s;
    }

    Ok((Tensor::new(&[c, h, w], out)?, ChannelNormStats { mean, inv_std }))
}

/// Backward of [`channel_norm`]. Returns `(dx, dgamma, dbeta)`.
pub fn channel_norm_backward(
    input: &Tensor,
    gamma: &Tensor,
    stats: &ChannelNormStats,
    d_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (c, h, w) = input.chw()?;
    let hw = h * w;
    let n_inv = 1.0 / hw as f32;
    let x = input.data();
    let g = gamma.data();
    let dy = d_out.data();
    let mut dx = vec![0.0f32; c * hw];
    let mut dgamma = vec![0.0f32; c];
    let mut dbeta = vec![0.0f32; c];

    struct Affine {
        dg: f32,
        db: f32,
    }
    let grad_plane = |(ci, plane): (usize, &mut [f32])| -> Affine {
        let src = &x[ci * hw..(ci + 1) * hw];
        let dyp = &dy[ci * hw..(ci + 1) * hw];
        let (m, is) = (stats.mean[ci], stats.inv_std[ci]);
        // xhat_i = (x_i - m) * is
        let mut sum_dy = 0.0f32;
        let mut sum_dy_xhat = 0.0f32;
        for (&v, &gy) in src.iter().zip(dyp) {
            sum_dy += gy;
            sum_dy_xhat += gy * ((v - m) * is);
        }
        let mean_dy = sum_dy * n_inv;
        let mean_dy_xhat = sum_dy_xhat * n_inv;
        let scale = g[ci] * is;
        for ((o, &v), &gy) in plane.iter_mut().zip(src).zip(dyp) {
            let xhat = (v - m) * is;
            *o = scale * (gy - mean_dy - xhat * mean_dy_xhat);
        }
        Affine { dg: sum_dy_xhat, db: sum_dy }
    };

    #[cfg(feature = "parallel")]
    {
        let affine: Vec<Affine> = dx
            .par_chunks_exact_mut(hw)
            .enumerate()
            .map(|(ci, plane)| grad_plane((ci, plane)))
            .collect();
        for (ci, a) in affine.into_iter().enumerate() {
            dgamma[ci] = a.dg;
            dbeta[ci] = a.db;
        }
    }
    #[cfg(not(feature = "parallel"))]
    for (ci, plane) in dx.chunks_exact_mut(hw).enumerate() {
        let a = grad_plane((ci, plane));
        dgamma[ci] = a.dg;
        dbeta[ci] = a.db;
    }

    Ok((
        Tensor::new(&[c, h, w], dx)?,
        Tensor::new(&[c], dgamma)?,
        Tensor::new(&[c], dbeta)?,
    ))
}

// ── Elementwise maps ─────────────────────────────────────────────────

pub fn map_unary(input: &Tensor, f: impl Fn(f32) -> f32 + Sync + Send) -> Tensor {
    let mut out = input.clone();
    #[cfg(feature = "parallel")]
    if out.len() >= 1 << 14 {
        out.data_mut().par_iter_mut().for_each(|v| *v = f(*v));
        return out;
    }
    out.data_mut().iter_mut().for_each(|v| *v = f(*v));
    out
}

pub fn zip_binary(
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f32, f32) -> f32 + Sync + Send,
) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(NumericsError::ShapeMismatch(format!(
            "elementwise op on {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = a.clone();
    let bd = b.data();
    #[cfg(feature = "parallel")]
    if out.len() >= 1 << 14 {
        out.data_mut()
            .par_iter_mut()
            .zip(bd.par_iter())
            .for_each(|(v, &bv)| *v = f(*v, bv));
        return Ok(out);
    }
    out.data_mut().iter_mut().zip(bd).for_each(|(v, &bv)| *v = f(*v, bv));
    Ok(out)
}
