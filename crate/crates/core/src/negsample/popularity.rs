use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::pool::{sample_negatives, CandidatePool, PoolSource, TruthFilter};
use crate::corpus::KnowledgeTriple;
use crate::{Error, Result};

/// Whether the popularity head pool is ranked over all objects or within
/// each category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolScope {
    #[default]
    Global,
    PerCategory,
}

/// Linear-interpolation quantile at level `1 - head_quantile` of the scores.
pub fn popularity_threshold(scores: &[f64], head_quantile: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::InvalidConfig("no popularity scores".into()));
    }
    if !(0.0..=1.0).contains(&head_quantile) || head_quantile == 0.0 {
        return Err(Error::InvalidConfig(format!("head quantile {head_quantile} outside (0, 1]")));
    }
    let mut s = scores.to_vec();
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("popularity score".into()));
    }
    s.sort_by(f64::total_cmp);
    let pos = (1.0 - head_quantile) * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(s[lo] + (s[hi] - s[lo]) * (pos - lo as f64))
}

fn head_pool(name: &str, objects: &BTreeSet<&str>, popularity: &BTreeMap<String, f64>, q: f64) -> Result<CandidatePool> {
    let mut scored = Vec::with_capacity(objects.len());
    for &o in objects {
        let p = *popularity
            .get(o)
            .ok_or_else(|| Error::InvalidConfig(format!("no popularity for object {o:?}")))?;
        scored.push((o, p));
    }
    let scores: Vec<f64> = scored.iter().map(|s| s.1).collect();
    let cut = popularity_threshold(&scores, q)?;
    Ok(CandidatePool::from_weights(
        name,
        PoolSource::PopularityTable,
        scored.into_iter().filter(|s| s.1 >= cut),
    ))
}

/// Head pools by popularity: objects at or above the `1 - head_quantile`
/// quantile. The global scope ranks every object in the popularity table
/// and is keyed `"*"`; the per-category scope ranks each category's own
/// objects.
pub fn popularity_pools(
    triples: &[KnowledgeTriple],
    popularity: &BTreeMap<String, f64>,
    head_quantile: f64,
    scope: PoolScope,
) -> Result<BTreeMap<String, CandidatePool>> {
    let mut out = BTreeMap::new();
    match scope {
        PoolScope::Global => {
            let objects: BTreeSet<&str> = popularity.keys().map(String::as_str).collect();
            out.insert("*".to_string(), head_pool("*", &objects, popularity, head_quantile)?);
        }
        PoolScope::PerCategory => {
            let mut by_cat: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
            for t in triples {
                by_cat.entry(t.category.as_str()).or_default().insert(t.object.as_str());
            }
            for (cat, objects) in by_cat {
                out.insert(cat.to_string(), head_pool(cat, &objects, popularity, head_quantile)?);
            }
        }
    }
    Ok(out)
}

/// Popularity-based baseline: losers drawn uniformly from the popularity
/// head pool minus each triple's truths.
pub fn popularity_sampler(
    triples: &[KnowledgeTriple],
    popularity: &BTreeMap<String, f64>,
    head_quantile: f64,
    n: usize,
    seed: u64,
    scope: PoolScope,
) -> Result<BTreeMap<String, Vec<String>>> {
    let pools = popularity_pools(triples, popularity, head_quantile, scope)?;
    let mut out = BTreeMap::new();
    for t in triples {
        let key = match scope {
            PoolScope::Global => "*",
            PoolScope::PerCategory => t.category.as_str(),
        };
        let draw = sample_negatives(&pools[key], t, n, seed, TruthFilter::Aliases)?;
        out.insert(t.id.clone(), draw.losers);
    }
    Ok(out)
}
