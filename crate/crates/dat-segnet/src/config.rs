use crate::error::{Result, SegnetError};

/// Architecture knobs. The layer layout is a pure function of this struct.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub num_classes: usize,
    pub base_width: usize,
    /// Number of encoder stages; each halves the spatial resolution.
    pub depth: usize,
    pub head_dropout_rate: f32,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_channels: 3,
            num_classes: 6,
            base_width: 16,
            depth: 3,
            head_dropout_rate: 0.1,
            seed: 42,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(SegnetError::Config(format!(
                "num_classes must be >= 2, got {}",
                self.num_classes
            )));
        }
        if self.num_classes > 255 {
            return Err(SegnetError::Config(format!(
                "num_classes must fit a u8 class map, got {}",
                self.num_classes
            )));
        }
        if self.base_width < 4 {
            return Err(SegnetError::Config(format!(
                "base_width must be >= 4, got {}",
                self.base_width
            )));
        }
        if self.depth == 0 {
            return Err(SegnetError::Config("depth must be >= 1".into()));
        }
        if self.in_channels == 0 {
            return Err(SegnetError::Config("in_channels must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.head_dropout_rate) {
            return Err(SegnetError::Config(format!(
                "head_dropout_rate must be in [0,1), got {}",
                self.head_dropout_rate
            )));
        }
        Ok(())
    }

    /// Spatial granularity required of inputs: `2^depth`.
    pub fn spatial_multiple(&self) -> usize {
        1 << self.depth
    }

    /// Channel width of encoder stage `i`.
    pub fn stage_width(&self, i: usize) -> usize {
        self.base_width << i
    }
}
