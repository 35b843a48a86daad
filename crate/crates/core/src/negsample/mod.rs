//! Negative discovery from model beams, preference-pair construction, the
//! popularity-based baseline and the sampled-vs-full pool similarity check.

mod pairs;
mod pool;
mod popularity;
mod similarity;

pub use pairs::{
    build_pairs, read_pairs, split_row, write_pairs, PreferencePair, PAD_GLYPH,
};
pub use pool::{
    discover_pool, instance_negatives, sample_negatives, CandidatePool, InstanceThreshold, NegativeDraw,
    PoolConfig, PoolSource, PoolWeighting, TruthFilter,
};
pub use popularity::{popularity_pools, popularity_sampler, popularity_threshold, PoolScope};
pub use similarity::{distribution_similarity, Similarity};
