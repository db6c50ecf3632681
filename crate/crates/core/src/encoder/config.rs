use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape and regularization settings of the encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub max_len: usize,
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub ffn_mult: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            vocab_size: 2000,
            max_len: 64,
            layers: 2,
            heads: 4,
            hidden: 128,
            ffn_mult: 4,
            dropout: 0.1,
            seed: 17,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size <= crate::tokenize::vocab::NUM_SPECIAL {
            return Err(Error::Config("vocab_size must exceed the special tokens".into()));
        }
        if self.hidden == 0 || self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "hidden ({}) must be a positive multiple of heads ({})",
                self.hidden, self.heads
            )));
        }
        if self.max_len < 8 {
            return Err(Error::Config(format!("max_len must be >= 8, got {}", self.max_len)));
        }
        if self.ffn_mult == 0 {
            return Err(Error::Config("ffn_mult must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0,1), got {}", self.dropout)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn ffn_dim(&self) -> usize {
        self.hidden * self.ffn_mult
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let (v, d, f, l) = (self.vocab_size, self.hidden, self.ffn_dim(), self.max_len);
        let per_layer = 4 * (d * d + d) + 2 * d + (d * f + f) + (f * d + d) + 2 * d;
        v * d + l * d + 2 * d + self.layers * per_layer + v
    }
}
