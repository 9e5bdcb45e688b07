use serde::{Deserialize, Serialize};

use super::{ModelError, Result};
use crate::classes::NUM_CLASSES;

/// Widths and depths of the classifier. Defaults are the ×1.0 shuffle backbone
/// with a two-layer head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_size: usize,
    pub stem_channels: usize,
    pub stage_blocks: Vec<usize>,
    pub stage_channels: Vec<usize>,
    pub final_conv_channels: usize,
    pub head_hidden: usize,
    pub num_classes: usize,
    /// Dropout before the hidden head layer. Identity at inference.
    pub dropout1: f32,
    /// Dropout before the output layer. Identity at inference.
    pub dropout2: f32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_size: 224,
            stem_channels: 24,
            stage_blocks: vec![4, 8, 4],
            stage_channels: vec![116, 232, 464],
            final_conv_channels: 1024,
            head_hidden: 1024,
            num_classes: NUM_CLASSES,
            dropout1: 0.480,
            dropout2: 0.492,
        }
    }
}

impl ModelConfig {
    /// A narrow, shallow variant on 32×32 inputs for fast tests and demos.
    pub fn small() -> Self {
        Self {
            input_size: 32,
            stem_channels: 8,
            stage_blocks: vec![1, 2, 1],
            stage_channels: vec![16, 32, 64],
            final_conv_channels: 64,
            head_hidden: 32,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ModelError::Config(msg));
        if self.input_size == 0 || self.stem_channels == 0 {
            return bad("input_size and stem_channels must be positive".into());
        }
        if self.stage_blocks.is_empty() || self.stage_blocks.len() != self.stage_channels.len() {
            return bad(format!(
                "stage_blocks ({}) and stage_channels ({}) must be non-empty and the same length",
                self.stage_blocks.len(),
                self.stage_channels.len()
            ));
        }
        if let Some(i) = self.stage_blocks.iter().position(|&b| b == 0) {
            return bad(format!("stage {i} has no blocks"));
        }
        if let Some(&c) = self
            .stage_channels
            .iter()
            .find(|&&c| c == 0 || c % 2 != 0)
        {
            return bad(format!("stage width {c} must be positive and even"));
        }
        if self.final_conv_channels == 0 || self.head_hidden == 0 {
            return bad("final_conv_channels and head_hidden must be positive".into());
        }
        if self.num_classes < 2 {
            return bad(format!("num_classes must be at least 2, got {}", self.num_classes));
        }
        for (name, p) in [("dropout1", self.dropout1), ("dropout2", self.dropout2)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        Ok(())
    }
}
