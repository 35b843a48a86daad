//! Knowledge triples, synthetic head/tail worlds, vocabularies and rendered
//! training streams.

mod external;
mod freq;
pub(crate) mod render;
mod vocab;
mod world;

pub use external::{load_external_dataset, DatasetFormat, ExternalLoad, LoadOptions};
pub use freq::{category_frequency_table, CategoryTable};
pub use render::{
    read_corpus_dump, render_corpus, render_example, write_corpus_dump, CorpusDumpRow,
    RenderedExample,
};
pub use vocab::{TokenizerMode, Vocabulary, BOS_ID, EOS_ID, PAD_ID, UNK_ID};
pub use world::{default_categories, generate_world, FrequencyLaw, RelationSchema, World, WorldSpec};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// One `(subject, predicate, object)` fact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeTriple {
    pub id: String,
    pub subject: String,
    pub predicate: String,
    pub object: String,
    /// Acceptable surface forms of the object; always contains `object`.
    pub object_aliases: BTreeSet<String>,
    pub category: String,
    /// Number of times the triple appears in the rendered corpus.
    pub frequency: u32,
    /// The question asked about `(subject, predicate)`.
    pub question: String,
}

impl KnowledgeTriple {
    /// Normalized alias set used for truth filtering and judging.
    pub fn normalized_aliases(&self) -> BTreeSet<String> {
        self.object_aliases.iter().map(|a| crate::normalize(a)).collect()
    }
}
