//! Decoder-only transformer with exact log-probabilities and hand-written
//! reverse-mode gradients.
//!
//! Pre-norm residual blocks, learned absolute positions, tanh-GELU MLP and an
//! untied output projection with bias. Batches are flattened to one row
//! matrix so every position-wise layer is a single GEMM; only attention is
//! per-sequence. Each output row depends only on its own sequence prefix, so
//! a row is bit-identical whether it is computed alone or inside a batch.

mod checkpoint;
mod config;
mod lm;
mod params;
mod prior;
mod scalar;
mod transformer;

pub use checkpoint::{Checkpoint, RngState};
pub use config::{ModelConfig, Precision};
pub use lm::LanguageModel;
pub use params::{Parameters, TensorSpec};
pub use prior::PriorModel;
pub use scalar::Scalar;
pub use transformer::{backward, forward, forward_batch, sequence_logprob, ForwardPass};
