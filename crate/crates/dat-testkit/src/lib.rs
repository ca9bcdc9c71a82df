//! Independent reference implementations used as oracles in tests.
//!
//! Everything here is written the obvious way — f64, nested loops, direct
//! formulas — and deliberately shares no code with the production crates it
//! checks. Keep it that way.

pub mod refnet;

/// Minimal f64 tensor for oracle code.
#[derive(Debug, Clone)]
pub struct RTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl RTensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape: shape.to_vec(), data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn from_f32(shape: &[usize], data: &[f32]) -> Self {
        Self::new(shape, data.iter().map(|&v| v as f64).collect())
    }
}

/// Direct nested-loop 2-D convolution over `[C,H,W]` (zero padding).
pub fn conv2d_oracle(
    input: &RTensor,
    weight: &RTensor,
    bias: &[f64],
    stride: usize,
    pad: usize,
) -> RTensor {
    let (c_in, h, w) = (input.shape[0], input.shape[1], input.shape[2]);
    let (c_out, k) = (weight.shape[0], weight.shape[2]);
    assert_eq!(weight.shape[1], c_in);
    assert_eq!(weight.shape[3], k);
    let h_out = (h + 2 * pad - k) / stride + 1;
    let w_out = (w + 2 * pad - k) / stride + 1;
    let mut out = RTensor::zeros(&[c_out, h_out, w_out]);
    for co in 0..c_out {
        for oy in 0..h_out {
            for ox in 0..w_out {
                let mut acc = bias[co];
                for ci in 0..c_in {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            let xv = input.data[ci * h * w + iy as usize * w + ix as usize];
                            let wv =
                                weight.data[((co * c_in + ci) * k + ky) * k + kx];
                            acc += xv * wv;
                        }
                    }
                }
                out.data[co * h_out * w_out + oy * w_out + ox] = acc;
            }
        }
    }
    out
}

/// Direct bilinear interpolation (half-pixel centres, clamped, four
/// explicit tap weights).
pub fn bilinear_oracle(input: &RTensor, new_h: usize, new_w: usize) -> RTensor {
    let (c, h, w) = (input.shape[0], input.shape[1], input.shape[2]);
    let mut out = RTensor::zeros(&[c, new_h, new_w]);
    let tap = |o: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        let src = (o as f64 + 0.5) * (n_in as f64 / n_out as f64) - 0.5;
        let src = src.clamp(0.0, (n_in - 1) as f64);
        let lo = src.floor() as usize;
        (lo, (lo + 1).min(n_in - 1), src - lo as f64)
    };
    for ci in 0..c {
        for oy in 0..new_h {
            let (y0, y1, wy) = tap(oy, h, new_h);
            for ox in 0..new_w {
                let (x0, x1, wx) = tap(ox, w, new_w);
                let at = |y: usize, x: usize| input.data[ci * h * w + y * w + x];
                out.data[ci * new_h * new_w + oy * new_w + ox] = (1.0 - wy) * (1.0 - wx) * at(y0, x0)
                    + (1.0 - wy) * wx * at(y0, x1)
                    + wy * (1.0 - wx) * at(y1, x0)
                    + wy * wx * at(y1, x1);
            }
        }
    }
    out
}

/// Two-pass per-position mean and population standard deviation across the
/// leading axis of an `m × n` table.
pub fn mean_std_oracle(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let m = rows.len();
    let n = rows[0].len();
    let mut mean = vec![0.0; n];
    for row in rows {
        for (acc, &v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    for v in &mut mean {
        *v /= m as f64;
    }
    let mut std = vec![0.0; n];
    for row in rows {
        for ((acc, &v), &mu) in std.iter_mut().zip(row).zip(&mean) {
            *acc += (v - mu) * (v - mu);
        }
    }
    for v in &mut std {
        *v = (*v / m as f64).sqrt();
    }
    (mean, std)
}

/// Full-sort top-k selection: highest score first, ties broken by lowest
/// index, excluded indices skipped.
pub fn top_k_oracle(scores: &[f32], k: usize, exclude: &[bool]) -> Vec<u32> {
    let mut idx: Vec<u32> = (0..scores.len() as u32)
        .filter(|&i| !exclude.get(i as usize).copied().unwrap_or(false))
        .collect();
    idx.sort_by(|&a, &b| {
        scores[b as usize]
            .partial_cmp(&scores[a as usize])
            .unwrap()
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

/// Brute-force per-class IoU via set intersections; classes absent from both
/// prediction and truth are excluded from the mean.
pub fn miou_oracle(pred: &[u8], label: &[u8], num_classes: usize) -> f64 {
    assert_eq!(pred.len(), label.len());
    let mut total = 0.0;
    let mut counted = 0usize;
    for c in 0..num_classes as u8 {
        let inter = pred
            .iter()
            .zip(label)
            .filter(|&(&p, &l)| p == c && l == c)
            .count();
        let union = pred
            .iter()
            .zip(label)
            .filter(|&(&p, &l)| p == c || l == c)
            .count();
        if union == 0 {
            continue;
        }
        total += inter as f64 / union as f64;
        counted += 1;
    }
    if counted == 0 {
        0.0
    } else {
        total / counted as f64
    }
}
