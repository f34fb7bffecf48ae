use serde::{Deserialize, Serialize};

use super::vocab::VOCAB_SIZE;
use crate::error::{Error, Result};
use crate::features::{FULL_WIDTH, MAX_FRAMES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_encoder_layers: usize,
    pub n_decoder_layers: usize,
    pub d_ff: usize,
    /// 277 for Mel+MFCC+centroid input, 256 for Mel only.
    pub input_width: usize,
    pub vocab: usize,
    pub dropout: f64,
    pub max_src_len: usize,
    pub max_tgt_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 256,
            n_heads: 8,
            n_encoder_layers: 5,
            n_decoder_layers: 5,
            d_ff: 512,
            input_width: FULL_WIDTH,
            vocab: VOCAB_SIZE,
            dropout: 0.1,
            max_src_len: MAX_FRAMES,
            max_tgt_len: 8,
        }
    }
}

impl ModelConfig {
    /// Small configuration for smoke tests and desk-scale experiments.
    pub fn tiny(d_model: usize, layers: usize) -> Self {
        Self {
            d_model,
            n_heads: if d_model.is_multiple_of(4) { 4 } else { 1 },
            n_encoder_layers: layers,
            n_decoder_layers: layers,
            d_ff: 2 * d_model,
            dropout: 0.0,
            ..Self::default()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let extents = [
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("n_encoder_layers", self.n_encoder_layers),
            ("n_decoder_layers", self.n_decoder_layers),
            ("d_ff", self.d_ff),
            ("input_width", self.input_width),
            ("vocab", self.vocab),
            ("max_src_len", self.max_src_len),
            ("max_tgt_len", self.max_tgt_len),
        ];
        if let Some((name, _)) = extents.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.vocab != VOCAB_SIZE {
            return Err(Error::Config(format!(
                "vocab must be {VOCAB_SIZE}, got {}",
                self.vocab
            )));
        }
        if self.max_tgt_len < 3 {
            return Err(Error::Config("max_tgt_len must be at least 3".into()));
        }
        Ok(())
    }

    /// Named numeric fields in a fixed order, as stored in checkpoints.
    pub fn to_pairs(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("d_model", self.d_model as f64),
            ("n_heads", self.n_heads as f64),
            ("n_encoder_layers", self.n_encoder_layers as f64),
            ("n_decoder_layers", self.n_decoder_layers as f64),
            ("d_ff", self.d_ff as f64),
            ("input_width", self.input_width as f64),
            ("vocab", self.vocab as f64),
            ("dropout", self.dropout),
            ("max_src_len", self.max_src_len as f64),
            ("max_tgt_len", self.max_tgt_len as f64),
        ]
    }

    pub fn from_pairs(pairs: &[(String, f64)]) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        for (key, value) in pairs {
            let v = *value;
            let as_usize = || -> Result<usize> {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(Error::Checkpoint(format!("field {key} is not a count: {v}")))
                }
            };
            match key.as_str() {
                "d_model" => cfg.d_model = as_usize()?,
                "n_heads" => cfg.n_heads = as_usize()?,
                "n_encoder_layers" => cfg.n_encoder_layers = as_usize()?,
                "n_decoder_layers" => cfg.n_decoder_layers = as_usize()?,
                "d_ff" => cfg.d_ff = as_usize()?,
                "input_width" => cfg.input_width = as_usize()?,
                "vocab" => cfg.vocab = as_usize()?,
                "dropout" => cfg.dropout = v,
                "max_src_len" => cfg.max_src_len = as_usize()?,
                "max_tgt_len" => cfg.max_tgt_len = as_usize()?,
                other => return Err(Error::Checkpoint(format!("unknown config field {other}"))),
            }
        }
        Ok(cfg)
    }

    /// True when the two configurations describe the same parameter layout.
    pub fn same_architecture(&self, other: &ModelConfig) -> bool {
        let strip = |c: &ModelConfig| ModelConfig {
            dropout: 0.0,
            ..c.clone()
        };
        strip(self) == strip(other)
    }
}
