use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn bytes(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub context_len: usize,
    pub layers: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub mlp_ratio: f64,
    #[serde(default = "default_precision")]
    pub precision: Precision,
    pub init_seed: u64,
    /// Standard deviation of the normal initializer.
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
}

fn default_precision() -> Precision {
    Precision::F32
}

fn default_init_scale() -> f64 {
    0.02
}

impl ModelConfig {
    pub fn new(vocab_size: usize, context_len: usize, layers: usize, model_dim: usize, heads: usize) -> Self {
        Self {
            vocab_size,
            context_len,
            layers,
            model_dim,
            heads,
            mlp_ratio: 4.0,
            precision: Precision::F32,
            init_seed: 0,
            init_scale: default_init_scale(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.init_seed = seed;
        self
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    pub fn mlp_dim(&self) -> usize {
        ((self.model_dim as f64) * self.mlp_ratio).round() as usize
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ShapeMismatch(m));
        if self.vocab_size < 2 || self.context_len == 0 || self.layers == 0 {
            return bad("vocab_size >= 2, context_len >= 1 and layers >= 1 required".into());
        }
        if self.heads == 0 || self.model_dim == 0 || self.model_dim % self.heads != 0 {
            return bad(format!(
                "model_dim {} not divisible by heads {}",
                self.model_dim, self.heads
            ));
        }
        if !(self.mlp_ratio > 0.0) || self.mlp_dim() == 0 {
            return bad(format!("mlp_ratio {} must be positive", self.mlp_ratio));
        }
        if !(self.init_scale >= 0.0) {
            return bad("init_scale must be non-negative".into());
        }
        Ok(())
    }
}
