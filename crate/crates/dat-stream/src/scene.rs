//! Procedural labeled scenes: a textured background plus a handful of
//! colored shapes, one class per shape kind. Deterministic per seed.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dat_numerics::{ClassMap, Tensor};

use crate::error::{Result, StreamError};

pub const CLASS_NAMES: [&str; 6] =
    ["background", "circle", "rectangle", "triangle", "stripe", "blob"];

/// Base colors per class; each placed shape jitters its own copy.
const CLASS_COLORS: [[f32; 3]; 6] = [
    [0.33, 0.38, 0.34], // background
    [0.78, 0.22, 0.20], // circle
    [0.20, 0.32, 0.80], // rectangle
    [0.88, 0.78, 0.20], // triangle
    [0.62, 0.26, 0.72], // stripe
    [0.22, 0.66, 0.32], // blob
];

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    pub min_shapes: usize,
    pub max_shapes: usize,
    /// Uniform per-pixel noise amplitude added to every channel.
    pub noise: f32,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self { height: 64, width: 64, num_classes: 6, min_shapes: 3, max_shapes: 6, noise: 0.02 }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height < 8 || self.width < 8 {
            return Err(StreamError::Config(format!(
                "scene must be at least 8x8, got {}x{}",
                self.height, self.width
            )));
        }
        if !(2..=6).contains(&self.num_classes) {
            return Err(StreamError::Config(format!(
                "scene supports 2..=6 classes, got {}",
                self.num_classes
            )));
        }
        if self.min_shapes == 0 || self.min_shapes > self.max_shapes {
            return Err(StreamError::Config(format!(
                "bad shape count range {}..={}",
                self.min_shapes, self.max_shapes
            )));
        }
        if !(0.0..0.5).contains(&self.noise) {
            return Err(StreamError::Config(format!("noise must be in [0,0.5), got {}", self.noise)));
        }
        Ok(())
    }
}

fn jitter(rng: &mut ChaCha8Rng, base: [f32; 3], amp: f32) -> [f32; 3] {
    [
        base[0] + rng.gen_range(-amp..amp),
        base[1] + rng.gen_range(-amp..amp),
        base[2] + rng.gen_range(-amp..amp),
    ]
}

/// Paint `color` and `class` at every pixel where `inside` holds.
fn rasterize(
    color_map: &mut [f32],
    label: &mut ClassMap,
    h: usize,
    w: usize,
    class: u8,
    color: [f32; 3],
    inside: impl Fn(f32, f32) -> bool,
) {
    for y in 0..h {
        for x in 0..w {
            if inside(x as f32 + 0.5, y as f32 + 0.5) {
                for (ch, &cv) in color.iter().enumerate() {
                    color_map[ch * h * w + y * w + x] = cv;
                }
                label.set(y, x, class);
            }
        }
    }
}

/// Deterministic scene generation: same seed, same scene, bit for bit.
pub fn gen_scene(seed: u64, cfg: &SceneConfig) -> Result<(Tensor, ClassMap)> {
    cfg.validate()?;
    let (h, w) = (cfg.height, cfg.width);
    let s = h.min(w) as f32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let bg = jitter(&mut rng, CLASS_COLORS[0], 0.03);
    let mut color_map = vec![0.0f32; 3 * h * w];
    for ch in 0..3 {
        color_map[ch * h * w..(ch + 1) * h * w].fill(bg[ch]);
    }
    let mut label = ClassMap::new(h, w);

    let n_shapes = rng.gen_range(cfg.min_shapes..=cfg.max_shapes);
    for _ in 0..n_shapes {
        let class = rng.gen_range(1..cfg.num_classes) as u8;
        let color = jitter(&mut rng, CLASS_COLORS[class as usize], 0.05);
        match class {
            1 => {
                // circle
                let r = rng.gen_range(s / 10.0..s / 4.5);
                let cx = rng.gen_range(r..w as f32 - r);
                let cy = rng.gen_range(r..h as f32 - r);
                rasterize(&mut color_map, &mut label, h, w, class, color, |x, y| {
                    (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r
                });
            }
            2 => {
                // axis-aligned rectangle
                let rw = rng.gen_range(s / 6.0..s / 2.5);
                let rh = rng.gen_range(s / 6.0..s / 2.5);
                let x0 = rng.gen_range(0.0..w as f32 - rw);
                let y0 = rng.gen_range(0.0..h as f32 - rh);
                rasterize(&mut color_map, &mut label, h, w, class, color, |x, y| {
                    x >= x0 && x < x0 + rw && y >= y0 && y < y0 + rh
                });
            }
            3 => {
                // upright isoceles triangle
                let base = rng.gen_range(s / 5.0..s / 2.2);
                let th = rng.gen_range(s / 6.0..s / 2.5);
                let cx = rng.gen_range(base / 2.0..w as f32 - base / 2.0);
                let y_top = rng.gen_range(0.0..h as f32 - th);
                rasterize(&mut color_map, &mut label, h, w, class, color, |x, y| {
                    if y < y_top || y > y_top + th {
                        return false;
                    }
                    let half = (base / 2.0) * ((y - y_top) / th);
                    (x - cx).abs() <= half
                });
            }
            4 => {
                // full-width stripe through a random point at one of four angles
                let thick = rng.gen_range(s / 16.0..s / 7.0);
                let px = rng.gen_range(0.0..w as f32);
                let py = rng.gen_range(0.0..h as f32);
                let (nx, ny) = match rng.gen_range(0..4) {
                    0 => (1.0f32, 0.0f32),                       // vertical stripe
                    1 => (0.0, 1.0),                             // horizontal stripe
                    2 => (std::f32::consts::FRAC_1_SQRT_2, std::f32::consts::FRAC_1_SQRT_2),
                    _ => (std::f32::consts::FRAC_1_SQRT_2, -std::f32::consts::FRAC_1_SQRT_2),
                };
                rasterize(&mut color_map, &mut label, h, w, class, color, |x, y| {
                    ((x - px) * nx + (y - py) * ny).abs() <= thick / 2.0
                });
            }
            _ => {
                // blob: union of a few disks around a center
                let cx = rng.gen_range(s / 6.0..w as f32 - s / 6.0);
                let cy = rng.gen_range(s / 6.0..h as f32 - s / 6.0);
                let k = rng.gen_range(3..=5);
                let disks: Vec<(f32, f32, f32)> = (0..k)
                    .map(|_| {
                        let r = rng.gen_range(s / 16.0..s / 8.0);
                        let dx = rng.gen_range(-s / 8.0..s / 8.0);
                        let dy = rng.gen_range(-s / 8.0..s / 8.0);
                        (cx + dx, cy + dy, r)
                    })
                    .collect();
                rasterize(&mut color_map, &mut label, h, w, class, color, |x, y| {
                    disks
                        .iter()
                        .any(|&(dx, dy, r)| (x - dx) * (x - dx) + (y - dy) * (y - dy) <= r * r)
                });
            }
        }
    }

    let amp = cfg.noise;
    let image = Tensor::from_fn(&[3, h, w], |i| {
        (color_map[i] + rng.gen_range(-amp..amp)).clamp(0.0, 1.0)
    });
    Ok((image, label))
}
