//! Stylized domain corruptions. Severity 0 is the bitwise identity for
//! every kind; outputs are clamped to [0,1].

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use dat_numerics::Tensor;

use crate::error::{Result, StreamError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DomainKind {
    Clear,
    Fog,
    Night,
    Rain,
    Snow,
}

impl DomainKind {
    pub fn name(&self) -> &'static str {
        match self {
            DomainKind::Clear => "clear",
            DomainKind::Fog => "fog",
            DomainKind::Night => "night",
            DomainKind::Rain => "rain",
            DomainKind::Snow => "snow",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "clear" => Ok(DomainKind::Clear),
            "fog" => Ok(DomainKind::Fog),
            "night" => Ok(DomainKind::Night),
            "rain" => Ok(DomainKind::Rain),
            "snow" => Ok(DomainKind::Snow),
            other => Err(StreamError::Config(format!("unknown domain kind '{other}'"))),
        }
    }

    /// Severity at which the source model degrades noticeably but the scene
    /// stays recognizable.
    pub fn default_severity(&self) -> f32 {
        match self {
            DomainKind::Clear => 0.0,
            DomainKind::Fog | DomainKind::Night => 0.7,
            DomainKind::Rain | DomainKind::Snow => 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub severity: f32,
}

impl DomainSpec {
    pub fn new(kind: DomainKind, severity: f32) -> Result<Self> {
        if !(0.0..=1.0).contains(&severity) {
            return Err(StreamError::Config(format!(
                "severity must be in [0,1], got {severity}"
            )));
        }
        Ok(Self { kind, severity })
    }
}

const FOG_COLOR: [f32; 3] = [0.92, 0.92, 0.95];

/// Apply the corruption for `spec` to a `[3,H,W]` image in [0,1].
pub fn corrupt(image: &Tensor, spec: &DomainSpec, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let (c, h, w) = image.chw()?;
    if c != 3 {
        return Err(StreamError::Config(format!("corrupt expects 3 channels, got {c}")));
    }
    let s = spec.severity;
    if s == 0.0 || spec.kind == DomainKind::Clear {
        return Ok(image.clone());
    }
    let hw = h * w;
    let mut out = image.clone();
    match spec.kind {
        DomainKind::Clear => unreachable!(),
        DomainKind::Fog => {
            // Alpha-blend toward the fog color with a vertical depth ramp,
            // strongest at the top row (alpha there is exactly `severity`).
            for y in 0..h {
                let ramp = 1.0 - 0.7 * (y as f32 / (h - 1).max(1) as f32);
                let alpha = s * ramp;
                for ch in 0..3 {
                    let row = &mut out.data_mut()[ch * hw + y * w..ch * hw + (y + 1) * w];
                    for v in row {
                        *v = (*v * (1.0 - alpha) + FOG_COLOR[ch] * alpha).clamp(0.0, 1.0);
                    }
                }
            }
        }
        DomainKind::Night => {
            // Brightness scale-down plus additive sensor noise.
            let gain = 1.0 - 0.75 * s;
            let amp = 0.08 * s;
            for v in out.data_mut() {
                let noise = rng.gen_range(-amp..amp);
                *v = (*v * gain + noise).clamp(0.0, 1.0);
            }
        }
        DomainKind::Rain => {
            // Slight global darkening plus bright oriented streaks.
            let gain = 1.0 - 0.12 * s;
            for v in out.data_mut() {
                *v *= gain;
            }
            let n_streaks = (60.0 * s).round() as usize;
            for _ in 0..n_streaks {
                let x0 = rng.gen_range(0.0..w as f32);
                let y0 = rng.gen_range(0.0..h as f32);
                let len = rng.gen_range(6..15);
                let slant = rng.gen_range(0.25f32..0.5);
                for t in 0..len {
                    let x = (x0 + slant * t as f32) as usize;
                    let y = y0 as usize + t;
                    if x < w && y < h {
                        for ch in 0..3 {
                            let v = &mut out.data_mut()[ch * hw + y * w + x];
                            *v = (*v + 0.22).clamp(0.0, 1.0);
                        }
                    }
                }
            }
        }
        DomainKind::Snow => {
            // Bright speckle followed by a severity-weighted 3x3 box blur.
            let n_flakes = (hw as f32 * 0.015 * s).round() as usize;
            for _ in 0..n_flakes {
                let x = rng.gen_range(0..w);
                let y = rng.gen_range(0..h);
                for ch in 0..3 {
                    let v = &mut out.data_mut()[ch * hw + y * w + x];
                    *v = (*v * 0.2 + 0.95 * 0.8).clamp(0.0, 1.0);
                }
            }
            let blend = 0.35 * s;
            let speckled = out.clone();
            let src = speckled.data();
            for ch in 0..3 {
                for y in 0..h {
                    for x in 0..w {
                        let mut acc = 0.0f32;
                        let mut cnt = 0.0f32;
                        for dy in -1i32..=1 {
                            for dx in -1i32..=1 {
                                let yy = y as i32 + dy;
                                let xx = x as i32 + dx;
                                if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w {
                                    acc += src[ch * hw + yy as usize * w + xx as usize];
                                    cnt += 1.0;
                                }
                            }
                        }
                        let blurred = acc / cnt;
                        let v = &mut out.data_mut()[ch * hw + y * w + x];
                        *v = ((1.0 - blend) * src[ch * hw + y * w + x] + blend * blurred)
                            .clamp(0.0, 1.0);
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{gen_scene, SceneConfig};
    use rand_chacha::rand_core::SeedableRng;

    fn scene() -> Tensor {
        gen_scene(3, &SceneConfig::default()).unwrap().0
    }

    fn mad(a: &Tensor, b: &Tensor) -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| (x as f64 - y as f64).abs())
            .sum::<f64>()
            / a.len() as f64
    }

    #[test]
    fn severity_zero_is_bitwise_identity_for_every_kind() {
        let img = scene();
        for kind in [DomainKind::Fog, DomainKind::Night, DomainKind::Rain, DomainKind::Snow] {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let out = corrupt(&img, &DomainSpec { kind, severity: 0.0 }, &mut rng).unwrap();
            assert!(out.bits_eq(&img), "{} changed the image at severity 0", kind.name());
        }
    }

    #[test]
    fn fog_at_full_severity_whites_out_the_top_row() {
        let img = scene();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = corrupt(&img, &DomainSpec { kind: DomainKind::Fog, severity: 1.0 }, &mut rng)
            .unwrap();
        let (_, h, w) = out.chw().unwrap();
        let hw = h * w;
        for ch in 0..3 {
            for x in 0..w {
                let v = out.data()[ch * hw + x];
                assert!(
                    (v - FOG_COLOR[ch]).abs() <= 0.05,
                    "top row pixel {x} chan {ch}: {v} vs fog {}",
                    FOG_COLOR[ch]
                );
            }
        }
    }

    #[test]
    fn night_mean_intensity_strictly_decreases_with_severity() {
        let img = scene();
        let mut means = Vec::new();
        for &s in &[0.0f32, 0.5, 1.0] {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let out = corrupt(&img, &DomainSpec { kind: DomainKind::Night, severity: s }, &mut rng)
                .unwrap();
            means.push(out.data().iter().map(|&v| v as f64).sum::<f64>() / out.len() as f64);
        }
        assert!(means[0] > means[1] && means[1] > means[2], "means {means:?}");
    }

    #[test]
    fn fog_and_night_distortion_is_monotone_in_severity() {
        let img = scene();
        for kind in [DomainKind::Fog, DomainKind::Night] {
            let mut last = -1.0f64;
            for &s in &[0.0f32, 0.25, 0.5, 0.75, 1.0] {
                let mut rng = ChaCha8Rng::seed_from_u64(11);
                let out = corrupt(&img, &DomainSpec { kind, severity: s }, &mut rng).unwrap();
                let d = mad(&out, &img);
                assert!(d >= last, "{}: distortion not monotone at severity {s}", kind.name());
                last = d;
            }
        }
    }

    #[test]
    fn outputs_stay_in_unit_range() {
        let img = scene();
        for kind in [DomainKind::Fog, DomainKind::Night, DomainKind::Rain, DomainKind::Snow] {
            let mut rng = ChaCha8Rng::seed_from_u64(13);
            let out = corrupt(&img, &DomainSpec { kind, severity: 1.0 }, &mut rng).unwrap();
            assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
