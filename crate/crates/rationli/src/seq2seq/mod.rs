//! From-scratch encoder-decoder transformer over `ndarray`, generic in its
//! float width.
//!
//! The architecture is a small pre-norm transformer: RMS norms, multi-head
//! attention, ReLU feed-forward blocks, learned positional embeddings, and an
//! input embedding table tied to the output projection. Forward, backward,
//! and greedy decoding are hand-written; nothing here depends on an ML
//! framework, so every number is reproducible to the bit for a given seed
//! and float width.

pub mod checkpoint;
pub mod decode;
pub mod model;
mod ops;
pub mod params;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use decode::{greedy_decode, greedy_decode_batch, DecodeFormat};
pub use model::{backward, forward, project_logits, ForwardTrace, Mode};
pub use params::{init_params, Parameters};

/// Float width the model runs at. Training typically uses `f32` for speed;
/// gradient checking and tight numeric tests use `f64`.
pub trait Scalar: ndarray::NdFloat + serde::Serialize {
    /// Name recorded in checkpoint headers.
    const NAME: &'static str;

    fn from_f64(v: f64) -> Self;

    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("d_model {d_model} is not divisible by n_heads {n_heads}")]
    HeadSplit { d_model: usize, n_heads: usize },
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("sequence length {len} exceeds max_len {max_len}")]
    TooLong { len: usize, max_len: usize },
    #[error("token id {id} out of range for vocab size {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    /// Layers per stack; the encoder and decoder each get this many.
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub dropout: f64,
}

impl ModelConfig {
    /// Default geometry for a given vocabulary.
    pub fn with_vocab(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            d_model: 128,
            n_layers: 2,
            n_heads: 4,
            d_ff: 256,
            max_len: 256,
            dropout: 0.1,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d_model == 0
            || self.n_layers == 0
            || self.n_heads == 0
            || self.d_ff == 0
            || self.max_len == 0
            || self.vocab_size == 0
        {
            return Err(ModelError::Config(
                "all dimensions must be positive".to_string(),
            ));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(ModelError::HeadSplit {
                d_model: self.d_model,
                n_heads: self.n_heads,
            });
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}
