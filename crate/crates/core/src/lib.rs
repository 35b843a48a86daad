//! Head/tail knowledge-imbalance laboratory.
//!
//! The crate covers the whole loop at desk scale:
//!
//! - [`corpus`]: synthetic knowledge worlds with a head/tail frequency split,
//!   token vocabularies, rendered training streams, external QA ingestion.
//! - [`model`]: a small pre-norm decoder-only transformer with exact
//!   log-probabilities and hand-written reverse-mode gradients.
//! - [`decode`]: beam search and greedy decoding with cumulative log-probabilities.
//! - [`negsample`]: category candidate pools mined from beams, negative sampling,
//!   preference-pair rows, the popularity baseline and pool similarity.
//! - [`train`]: next-token pretraining, the DPO and continual-training losses,
//!   their weighted sum, and AdamW.
//! - [`eval`]: ACC, HR@k, MRR@k and Prob@k with per-question records.
//! - [`pipeline`]: manifest-driven experiment runs with persisted artifacts.
//!
//! The `examples/` directory holds one runnable program per capability.

pub mod corpus;
pub mod decode;
pub mod error;
pub mod eval;
pub mod model;
pub mod negsample;
pub mod pipeline;
pub mod train;

mod text;
mod util;

pub use error::{Error, Result};
pub use text::normalize;
