use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::CandidatePool;
use crate::{normalize, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub cosine: f64,
    pub spearman: f64,
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::Undefined("rank vector has zero variance".into()));
    }
    Ok((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}

/// Cosine and Spearman correlation between two pools' weight vectors,
/// aligned on the union of their (normalized) objects with absent objects
/// counted as zero. Spearman uses average ranks for ties.
pub fn distribution_similarity(a: &CandidatePool, b: &CandidatePool) -> Result<Similarity> {
    let mut keys: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for (t, w) in &a.candidates {
        keys.entry(normalize(t)).or_default().0 += w;
    }
    for (t, w) in &b.candidates {
        keys.entry(normalize(t)).or_default().1 += w;
    }
    let x: Vec<f64> = keys.values().map(|v| v.0).collect();
    let y: Vec<f64> = keys.values().map(|v| v.1).collect();
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::Undefined("zero weight vector".into()));
    }
    let dot: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
    let cosine = (dot / (nx * ny)).clamp(-1.0, 1.0);
    let spearman = pearson(&average_ranks(&x), &average_ranks(&y))?;
    Ok(Similarity { cosine, spearman })
}
