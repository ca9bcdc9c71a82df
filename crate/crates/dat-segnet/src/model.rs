use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dat_numerics::{ops, Graph, NodeId, ParamMask, Tensor};

use crate::config::ModelConfig;
use crate::error::{Result, SegnetError};
use crate::layout::{build_layout, LayerEntry, Layout, ParamKind};

/// Epsilon for the per-channel normalization layers.
pub const NORM_EPS: f32 = 1e-5;

/// Inference mode for [`Model::forward`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    /// No dropout anywhere.
    Deterministic,
    /// Dropout on the prediction head, drawn from the given seed with
    /// inference-style 1/(1-rate) scaling, so the mean over passes is an
    /// unbiased estimate of the deterministic output.
    Stochastic { seed: u64 },
}

/// Encoder-decoder segmentation model. All learnable scalars live in one
/// flat vector addressed through the layer table, so masks can pick
/// individual parameters.
#[derive(Debug, Clone)]
pub struct Model {
    cfg: ModelConfig,
    layout: Layout,
    params: Vec<f32>,
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f32 {
    loop {
        let u1: f64 = rng.gen::<f64>();
        if u1 > 1e-300 {
            let u2: f64 = rng.gen::<f64>();
            return ((-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()) as f32;
        }
    }
}

impl Model {
    /// Deterministic He-style initialization from `cfg.seed`.
    pub fn build(cfg: ModelConfig) -> Result<Model> {
        cfg.validate()?;
        let layout = build_layout(&cfg);
        let mut params = vec![0.0f32; layout.total()];
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for entry in layout.entries() {
            let slot = &mut params[entry.offset..entry.offset + entry.len];
            match entry.kind {
                ParamKind::ConvWeight => {
                    let fan_in: usize = entry.shape[1] * entry.shape[2] * entry.shape[3];
                    let std = (2.0 / fan_in as f64).sqrt() as f32;
                    for v in slot {
                        *v = standard_normal(&mut rng) * std;
                    }
                }
                ParamKind::ConvBias | ParamKind::NormBeta => slot.fill(0.0),
                ParamKind::NormGamma => slot.fill(1.0),
            }
        }
        Ok(Model { cfg, layout, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    pub fn set_params(&mut self, values: &[f32]) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(SegnetError::LayoutMismatch(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                values.len()
            )));
        }
        self.params.copy_from_slice(values);
        Ok(())
    }

    /// Materialize one layer-table entry as a tensor.
    pub fn param_tensor(&self, entry: &LayerEntry) -> Tensor {
        Tensor::new(&entry.shape, self.params[entry.offset..entry.offset + entry.len].to_vec())
            .expect("layout invariant")
    }

    fn entry(&self, name: &str) -> &LayerEntry {
        self.layout.find(name).expect("fixed architecture name")
    }

    /// Indices of every normalization affine scalar (gamma and beta).
    pub fn norm_affine_mask(&self) -> ParamMask {
        let mut idx = Vec::new();
        for e in self.layout.entries() {
            if matches!(e.kind, ParamKind::NormGamma | ParamKind::NormBeta) {
                idx.extend((e.offset as u32)..(e.offset + e.len) as u32);
            }
        }
        ParamMask::from_indices(idx)
    }

    fn check_input(&self, image: &Tensor) -> Result<()> {
        let (c, h, w) = image.chw()?;
        if c != self.cfg.in_channels {
            return Err(SegnetError::Shape(format!(
                "input has {c} channels, model expects {}",
                self.cfg.in_channels
            )));
        }
        let m = self.cfg.spatial_multiple();
        if h % m != 0 || w % m != 0 || h == 0 || w == 0 {
            return Err(SegnetError::Shape(format!(
                "input {h}x{w} must be a positive multiple of {m} (depth {})",
                self.cfg.depth
            )));
        }
        Ok(())
    }

    /// Inference forward pass; returns `[num_classes, H, W]` logits.
    pub fn forward(&self, image: &Tensor, mode: ForwardMode) -> Result<Tensor> {
        self.check_input(image)?;
        let conv = |x: &Tensor, prefix: &str, pad: usize| -> Result<Tensor> {
            let w = self.param_tensor(self.entry(&format!("{prefix}.weight")));
            let b = self.param_tensor(self.entry(&format!("{prefix}.bias")));
            Ok(ops::conv2d(x, &w, &b, 1, pad)?)
        };
        let norm = |x: &Tensor, prefix: &str| -> Result<Tensor> {
            let g = self.param_tensor(self.entry(&format!("{prefix}.gamma")));
            let b = self.param_tensor(self.entry(&format!("{prefix}.beta")));
            Ok(ops::channel_norm(x, &g, &b, NORM_EPS)?)
        };

        let mut x = image.clone();
        let mut skips: Vec<Tensor> = Vec::with_capacity(self.cfg.depth);
        for i in 0..self.cfg.depth {
            x = ops::relu(&norm(&conv(&x, &format!("enc{i}.conv_a"), 1)?, &format!("enc{i}.norm_a"))?);
            x = ops::relu(&norm(&conv(&x, &format!("enc{i}.conv_b"), 1)?, &format!("enc{i}.norm_b"))?);
            skips.push(x.clone());
            x = dat_numerics::kernels::avg_pool2(&x)?;
        }
        x = ops::relu(&norm(&conv(&x, "bottleneck.conv", 1)?, "bottleneck.norm")?);
        for i in (0..self.cfg.depth).rev() {
            let skip = &skips[i];
            let (_, sh, sw) = skip.chw()?;
            x = ops::bilinear_resize(&x, sh, sw)?;
            x = ops::add(&x, skip)?;
            x = ops::relu(&norm(&conv(&x, &format!("dec{i}.conv"), 1)?, &format!("dec{i}.norm"))?);
        }
        if let ForwardMode::Stochastic { seed } = mode {
            if self.cfg.head_dropout_rate > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                x = ops::dropout(&x, self.cfg.head_dropout_rate, &mut rng)?;
            }
        }
        Ok(conv(&x, "head.conv", 0)?)
    }

    /// Forward pass recorded on a tape for backpropagation. Parameters are
    /// bound at their flat offsets, so `Graph::backward` returns gradients
    /// aligned with [`Model::params`].
    pub fn forward_on_tape(
        &self,
        g: &mut Graph,
        image: &Tensor,
        mode: ForwardMode,
    ) -> Result<NodeId> {
        self.check_input(image)?;
        let bind = |g: &mut Graph, m: &Model, name: &str| -> NodeId {
            let e = m.entry(name);
            g.param(m.param_tensor(e), e.offset)
        };
        let conv = |g: &mut Graph, m: &Model, x: NodeId, prefix: &str, pad: usize| -> Result<NodeId> {
            let w = bind(g, m, &format!("{prefix}.weight"));
            let b = bind(g, m, &format!("{prefix}.bias"));
            Ok(g.conv2d(x, w, b, 1, pad)?)
        };
        let norm = |g: &mut Graph, m: &Model, x: NodeId, prefix: &str| -> Result<NodeId> {
            let ga = bind(g, m, &format!("{prefix}.gamma"));
            let be = bind(g, m, &format!("{prefix}.beta"));
            Ok(g.channel_norm(x, ga, be, NORM_EPS)?)
        };

        let mut x = g.leaf(image.clone());
        let mut skips: Vec<NodeId> = Vec::with_capacity(self.cfg.depth);
        for i in 0..self.cfg.depth {
            x = conv(g, self, x, &format!("enc{i}.conv_a"), 1)?;
            x = norm(g, self, x, &format!("enc{i}.norm_a"))?;
            x = g.relu(x);
            x = conv(g, self, x, &format!("enc{i}.conv_b"), 1)?;
            x = norm(g, self, x, &format!("enc{i}.norm_b"))?;
            x = g.relu(x);
            skips.push(x);
            x = g.avg_pool2(x)?;
        }
        x = conv(g, self, x, "bottleneck.conv", 1)?;
        x = norm(g, self, x, "bottleneck.norm")?;
        x = g.relu(x);
        for i in (0..self.cfg.depth).rev() {
            let skip = skips[i];
            let (_, sh, sw) = g.value(skip).chw()?;
            x = g.bilinear_resize(x, sh, sw)?;
            x = g.add(x, skip)?;
            x = conv(g, self, x, &format!("dec{i}.conv"), 1)?;
            x = norm(g, self, x, &format!("dec{i}.norm"))?;
            x = g.relu(x);
        }
        if let ForwardMode::Stochastic { seed } = mode {
            if self.cfg.head_dropout_rate > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                x = g.dropout(x, self.cfg.head_dropout_rate, &mut rng)?;
            }
        }
        conv(g, self, x, "head.conv", 0)
    }
}

/// Bitwise copy of the masked parameter indices from `src` to `dst`.
pub fn copy_params(src: &Model, dst: &mut Model, mask: &ParamMask) -> Result<()> {
    if src.layout != dst.layout {
        return Err(SegnetError::LayoutMismatch(
            "source and destination models have different layouts".into(),
        ));
    }
    for &i in mask.indices() {
        dst.params[i as usize] = src.params[i as usize];
    }
    Ok(())
}
