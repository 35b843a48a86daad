use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::corpus::KnowledgeTriple;
use crate::decode::BeamDump;
use crate::util::derived_rng;
use crate::{normalize, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolSource {
    ModelBeams,
    PopularityTable,
}

/// How beam answers are aggregated into a pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolWeighting {
    /// Each beam hypothesis counts once.
    #[default]
    Count,
    /// Each hypothesis contributes its sequence probability.
    Probability,
}

/// Which surface forms count as the truth when filtering negatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruthFilter {
    #[default]
    Aliases,
    CanonicalOnly,
}

impl TruthFilter {
    pub fn truths(self, triple: &KnowledgeTriple) -> BTreeSet<String> {
        match self {
            TruthFilter::Aliases => triple.normalized_aliases(),
            TruthFilter::CanonicalOnly => BTreeSet::from([normalize(&triple.object)]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub sample_per_category: usize,
    pub top_m: usize,
    #[serde(default)]
    pub weighting: PoolWeighting,
    #[serde(default)]
    pub truth_filter: TruthFilter,
    pub seed: u64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            sample_per_category: 1000,
            top_m: 20,
            weighting: PoolWeighting::Count,
            truth_filter: TruthFilter::Aliases,
            seed: 0,
        }
    }
}

/// Ranked high-frequency answers of one category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub category: String,
    /// `(object text, weight)`, descending by weight, ties by text.
    pub candidates: Vec<(String, f64)>,
    pub source: PoolSource,
}

impl CandidatePool {
    /// Builds a pool from raw weights, merging texts that normalize equally
    /// (the first surface form wins) and sorting.
    pub fn from_weights<'a>(
        category: &str,
        source: PoolSource,
        items: impl IntoIterator<Item = (&'a str, f64)>,
    ) -> Self {
        let mut order: Vec<(String, String)> = Vec::new();
        let mut weights: BTreeMap<String, f64> = BTreeMap::new();
        for (text, w) in items {
            let key = normalize(text);
            if key.is_empty() {
                continue;
            }
            let slot = weights.entry(key.clone()).or_insert_with(|| {
                order.push((key.clone(), text.trim().to_string()));
                0.0
            });
            *slot += w;
        }
        let mut candidates: Vec<(String, f64)> = order
            .into_iter()
            .map(|(key, text)| (text, weights[&key]))
            .collect();
        candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self {
            category: category.to_string(),
            candidates,
            source,
        }
    }

    pub fn truncate(&mut self, top_m: usize) {
        self.candidates.truncate(top_m);
    }

    pub fn objects(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().map(|(t, _)| t.as_str())
    }
}

fn index_triples(triples: &[KnowledgeTriple]) -> BTreeMap<&str, &KnowledgeTriple> {
    triples.iter().map(|t| (t.id.as_str(), t)).collect()
}

/// Aggregates beam answers into per-category candidate pools.
///
/// Per category, `sample_per_category` questions are drawn without
/// replacement (all of them if fewer exist), each question's own truths are
/// removed from its beams, and the remaining answers are counted.
pub fn discover_pool(
    dumps: &[BeamDump],
    triples: &[KnowledgeTriple],
    config: &PoolConfig,
) -> Result<BTreeMap<String, CandidatePool>> {
    if config.top_m == 0 {
        return Err(Error::InvalidConfig("top_m must be at least 1".into()));
    }
    let by_id = index_triples(triples);
    let mut by_cat: BTreeMap<&str, Vec<&BeamDump>> = BTreeMap::new();
    for d in dumps {
        by_cat.entry(d.category.as_str()).or_default().push(d);
    }
    let mut pools = BTreeMap::new();
    for (cat, mut group) in by_cat {
        if group.is_empty() {
            return Err(Error::EmptyCategory(cat.to_string()));
        }
        group.sort_by(|a, b| a.question_id.cmp(&b.question_id));
        let chosen: Vec<&BeamDump> = if config.sample_per_category >= group.len() {
            group
        } else {
            let mut rng = derived_rng(config.seed, &format!("pool/{cat}"));
            let mut idx = index::sample(&mut rng, group.len(), config.sample_per_category).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| group[i]).collect()
        };
        let mut items: Vec<(&str, f64)> = Vec::new();
        for d in chosen {
            let triple = by_id
                .get(d.question_id.as_str())
                .ok_or_else(|| Error::UnknownTriple(d.question_id.clone()))?;
            let truths = config.truth_filter.truths(triple);
            for b in &d.beams {
                if truths.contains(&normalize(&b.text)) {
                    continue;
                }
                let w = match config.weighting {
                    PoolWeighting::Count => 1.0,
                    PoolWeighting::Probability => b.logprob.exp(),
                };
                items.push((b.text.as_str(), w));
            }
        }
        let mut pool = CandidatePool::from_weights(cat, PoolSource::ModelBeams, items);
        pool.truncate(config.top_m);
        pools.insert(cat.to_string(), pool);
    }
    Ok(pools)
}

/// Losers drawn for one triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeDraw {
    pub losers: Vec<String>,
    /// Fewer than the requested number of valid candidates existed.
    pub shortfall: bool,
}

/// Draws `n` distinct losers uniformly without replacement from the pool
/// minus the triple's truths.
pub fn sample_negatives(
    pool: &CandidatePool,
    triple: &KnowledgeTriple,
    n: usize,
    seed: u64,
    filter: TruthFilter,
) -> Result<NegativeDraw> {
    let truths = filter.truths(triple);
    let valid: Vec<&str> = pool.objects().filter(|o| !truths.contains(&normalize(o))).collect();
    if valid.is_empty() {
        return Err(Error::EmptyPool(triple.id.clone()));
    }
    let take = n.min(valid.len());
    let mut rng = derived_rng(seed, &format!("negatives/{}", triple.id));
    let losers = index::sample(&mut rng, valid.len(), take)
        .into_iter()
        .map(|i| valid[i].to_string())
        .collect();
    Ok(NegativeDraw {
        losers,
        shortfall: take < n,
    })
}

/// Cut-off for per-instance negatives taken from a question's own beams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InstanceThreshold {
    /// The first `n` non-truth answers by rank.
    Rank { n: usize },
    /// Every non-truth answer with probability at least `min_prob`.
    Probability { min_prob: f64 },
}

impl Default for InstanceThreshold {
    fn default() -> Self {
        InstanceThreshold::Rank { n: 5 }
    }
}

/// Per-instance mode: negatives are the question's own high-ranked wrong
/// beam answers rather than draws from the category pool.
pub fn instance_negatives(
    dump: &BeamDump,
    triple: &KnowledgeTriple,
    threshold: InstanceThreshold,
    filter: TruthFilter,
) -> Result<Vec<String>> {
    let truths = filter.truths(triple);
    let mut beams: Vec<_> = dump.beams.iter().collect();
    beams.sort_by_key(|b| b.rank);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for b in beams {
        let key = normalize(&b.text);
        if key.is_empty() || truths.contains(&key) || !seen.insert(key) {
            continue;
        }
        match threshold {
            InstanceThreshold::Rank { n } if out.len() >= n => break,
            InstanceThreshold::Probability { min_prob } if b.logprob.exp() < min_prob => continue,
            _ => {}
        }
        out.push(b.text.trim().to_string());
    }
    if out.is_empty() {
        return Err(Error::EmptyPool(triple.id.clone()));
    }
    Ok(out)
}
