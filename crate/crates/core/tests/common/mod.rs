#![allow(dead_code)]

use longtail_lab::corpus::{BOS_ID, EOS_ID};
use longtail_lab::model::{LanguageModel, ModelConfig, Parameters, Precision};
use longtail_lab::train::PairTokens;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Worst relative error between analytic and central-difference gradients
/// over `probes` random coordinates.
pub fn finite_difference_check(
    p: &mut Parameters<f64>,
    analytic: &Parameters<f64>,
    probes: usize,
    seed: u64,
    mut loss: impl FnMut(&Parameters<f64>) -> f64,
) -> f64 {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let i = rng.random_range(0..p.len());
        let orig = p.as_slice()[i];
        p.as_mut_slice()[i] = orig + h;
        let up = loss(p);
        p.as_mut_slice()[i] = orig - h;
        let down = loss(p);
        p.as_mut_slice()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.as_slice()[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

/// Adds uniform noise so norms and biases are away from their init values.
pub fn jitter(p: &mut Parameters<f64>, amount: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in p.as_mut_slice() {
        *v += rng.random_range(-amount..amount);
    }
}

pub fn cfg64(vocab: usize, dim: usize, seed: u64) -> ModelConfig {
    let mut c = ModelConfig::new(vocab, 16, 1, dim, 2).with_seed(seed).with_precision(Precision::F64);
    c.init_scale = 0.3;
    c
}

pub fn random_pairs(n: usize, vocab: u32, seed: u64) -> Vec<PairTokens> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let ctx_len = rng.random_range(1..5);
            let mut context = vec![BOS_ID];
            context.extend((0..ctx_len).map(|_| rng.random_range(4..vocab)));
            let w = rng.random_range(4..vocab);
            let l = loop {
                let l = rng.random_range(4..vocab);
                if l != w {
                    break l;
                }
            };
            let extra = rng.random_range(4..vocab);
            PairTokens {
                triple_id: format!("p{i}"),
                context,
                winner: vec![w, extra, EOS_ID],
                loser: vec![l, EOS_ID],
            }
        })
        .collect()
}

/// Every terminal outcome of at most `max_len` tokens after `prompt`:
/// sequences ending in EOS, or of exactly `max_len` without it. Sorted by
/// (logprob desc, ids asc).
pub fn enumerate_outcomes<M: LanguageModel>(m: &M, prompt: &[u32], max_len: usize) -> Vec<(Vec<u32>, f64)> {
    let eos = m.eos();
    let mut out = Vec::new();
    let mut stack = vec![(Vec::<u32>::new(), 0.0f64)];
    while let Some((seq, acc)) = stack.pop() {
        let mut prefix = prompt.to_vec();
        prefix.extend(&seq);
        let lp = m.next_logprobs(&[&prefix]).unwrap().remove(0);
        for t in 0..lp.len() as u32 {
            let mut s = seq.clone();
            s.push(t);
            let a = acc + lp[t as usize];
            if t == eos || s.len() == max_len {
                out.push((s, a));
            } else {
                stack.push((s, a));
            }
        }
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}
