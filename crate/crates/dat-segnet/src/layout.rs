//! Flat parameter layout: every learnable scalar gets a stable index.

use crate::config::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    ConvWeight,
    ConvBias,
    NormGamma,
    NormBeta,
}

/// One named parameter tensor inside the flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerEntry {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

/// Ordered table of parameter tensors. Offsets are contiguous,
/// non-overlapping, and cover exactly `total` scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    entries: Vec<LayerEntry>,
    total: usize,
}

impl Layout {
    pub fn entries(&self) -> &[LayerEntry] {
        &self.entries
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn find(&self, name: &str) -> Option<&LayerEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

struct LayoutBuilder {
    entries: Vec<LayerEntry>,
    cursor: usize,
}

impl LayoutBuilder {
    fn push(&mut self, name: String, kind: ParamKind, shape: &[usize]) {
        let len: usize = shape.iter().product();
        self.entries.push(LayerEntry {
            name,
            kind,
            shape: shape.to_vec(),
            offset: self.cursor,
            len,
        });
        self.cursor += len;
    }

    fn conv(&mut self, prefix: &str, c_out: usize, c_in: usize, k: usize) {
        self.push(format!("{prefix}.weight"), ParamKind::ConvWeight, &[c_out, c_in, k, k]);
        self.push(format!("{prefix}.bias"), ParamKind::ConvBias, &[c_out]);
    }

    fn norm(&mut self, prefix: &str, c: usize) {
        self.push(format!("{prefix}.gamma"), ParamKind::NormGamma, &[c]);
        self.push(format!("{prefix}.beta"), ParamKind::NormBeta, &[c]);
    }
}

/// Build the layer table for the fixed architecture:
///
/// - `depth` encoder stages of (conv3x3 → norm → relu) ×2 followed by a 2×2
///   average-pool downsample; stage `i` has width `base_width · 2^i`;
/// - one bottleneck conv3x3+norm+relu at the deepest width;
/// - a mirrored decoder: bilinear ×2 upsample, skip addition, then
///   conv3x3+norm+relu stepping the width back down;
/// - a 1×1 prediction head preceded by dropout.
pub fn build_layout(cfg: &ModelConfig) -> Layout {
    let mut b = LayoutBuilder { entries: Vec::new(), cursor: 0 };
    let mut prev = cfg.in_channels;
    for i in 0..cfg.depth {
        let w = cfg.stage_width(i);
        b.conv(&format!("enc{i}.conv_a"), w, prev, 3);
        b.norm(&format!("enc{i}.norm_a"), w);
        b.conv(&format!("enc{i}.conv_b"), w, w, 3);
        b.norm(&format!("enc{i}.norm_b"), w);
        prev = w;
    }
    let deepest = cfg.stage_width(cfg.depth - 1);
    b.conv("bottleneck.conv", deepest, deepest, 3);
    b.norm("bottleneck.norm", deepest);
    for i in (0..cfg.depth).rev() {
        let skip_w = cfg.stage_width(i);
        let out_w = if i > 0 { cfg.stage_width(i - 1) } else { cfg.base_width };
        b.conv(&format!("dec{i}.conv"), out_w, skip_w, 3);
        b.norm(&format!("dec{i}.norm"), out_w);
    }
    b.conv("head.conv", cfg.num_classes, cfg.base_width, 1);
    Layout { total: b.cursor, entries: b.entries }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_tile_the_flat_vector_exactly() {
        let layout = build_layout(&ModelConfig::default());
        let mut cursor = 0;
        for e in layout.entries() {
            assert_eq!(e.offset, cursor, "entry {} misplaced", e.name);
            assert_eq!(e.len, e.shape.iter().product::<usize>());
            cursor += e.len;
        }
        assert_eq!(cursor, layout.total());
    }

    #[test]
    fn layout_is_a_pure_function_of_config() {
        let a = build_layout(&ModelConfig::default());
        let b = build_layout(&ModelConfig::default());
        assert_eq!(a, b);
    }
}
