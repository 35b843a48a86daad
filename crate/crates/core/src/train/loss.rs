use std::ops::Range;

use ndarray::Array2;

use crate::corpus::{render::render_parts, Vocabulary, PAD_ID};
use crate::model::{backward, forward_batch, Parameters, Scalar};
use crate::negsample::PreferencePair;
use crate::{Error, Result};

/// Scalar loss value and its components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossValue {
    pub total: f64,
    pub dpo: f64,
    pub ct: f64,
}

/// A preference pair as token ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairTokens {
    pub triple_id: String,
    /// `BOS ++ prompt`.
    pub context: Vec<u32>,
    /// `winner ++ EOS`.
    pub winner: Vec<u32>,
    /// `loser ++ EOS`.
    pub loser: Vec<u32>,
}

impl PairTokens {
    pub fn winner_sequence(&self) -> Vec<u32> {
        [self.context.as_slice(), &self.winner].concat()
    }

    pub fn loser_sequence(&self) -> Vec<u32> {
        [self.context.as_slice(), &self.loser].concat()
    }
}

pub fn tokenize_pair(pair: &PreferencePair, vocab: &Vocabulary) -> Result<PairTokens> {
    let w = render_parts(&pair.triple_id, &pair.prompt, &pair.winner, vocab)?;
    let l = render_parts(&pair.triple_id, &pair.prompt, &pair.loser, vocab)?;
    if w.answer_tokens == l.answer_tokens {
        return Err(Error::IdenticalPair(pair.triple_id.clone()));
    }
    let ctx = w.context().to_vec();
    Ok(PairTokens {
        triple_id: pair.triple_id.clone(),
        winner: w.full_tokens[ctx.len()..].to_vec(),
        loser: l.full_tokens[ctx.len()..].to_vec(),
        context: ctx,
    })
}

/// Policy being trained and the frozen reference it is anchored to.
#[derive(Debug, Clone)]
pub struct PolicyPair<T> {
    pub policy: Parameters<T>,
    reference: Parameters<T>,
    reference_hash: String,
}

impl<T: Scalar> PolicyPair<T> {
    /// Both halves start from `base`.
    pub fn new(base: Parameters<T>) -> Self {
        let reference_hash = base.content_hash();
        Self {
            policy: base.clone(),
            reference: base,
            reference_hash,
        }
    }

    pub fn reference(&self) -> &Parameters<T> {
        &self.reference
    }

    /// Hash taken when the pair was created.
    pub fn reference_hash(&self) -> &str {
        &self.reference_hash
    }

    /// Recomputes the reference hash and checks it still matches.
    pub fn reference_intact(&self) -> bool {
        self.reference.content_hash() == self.reference_hash
    }
}

/// A sequence split into model input and the target span scored on it.
struct Scored<'a> {
    input: &'a [u32],
    targets: &'a [u32],
    rows: Range<usize>,
}

fn ntp_view(seq: &[u32]) -> Result<Scored<'_>> {
    if seq.len() < 2 {
        return Err(Error::EmptyContinuation);
    }
    Ok(Scored {
        input: &seq[..seq.len() - 1],
        targets: &seq[1..],
        rows: 0..seq.len() - 1,
    })
}

/// Input/rows for scoring `answer` after `context`; `seq = context ++ answer`.
fn answer_view<'a>(seq: &'a [u32], context_len: usize) -> Result<Scored<'a>> {
    if context_len == 0 || seq.len() <= context_len {
        return Err(Error::EmptyContinuation);
    }
    Ok(Scored {
        input: &seq[..seq.len() - 1],
        targets: &seq[context_len..],
        rows: context_len - 1..seq.len() - 1,
    })
}

/// Token-mean NLL over every non-PAD target of `seqs` (position 0 is never a
/// target). Accumulates the gradient into `grads` when given.
pub fn ntp_loss<T: Scalar>(p: &Parameters<T>, seqs: &[&[u32]], grads: Option<&mut Parameters<T>>) -> Result<f64> {
    if seqs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let views: Vec<Scored> = seqs.iter().map(|s| ntp_view(s)).collect::<Result<_>>()?;
    let inputs: Vec<&[u32]> = views.iter().map(|v| v.input).collect();
    let rows: Vec<Range<usize>> = views.iter().map(|v| v.rows.clone()).collect();
    let pass = forward_batch(p, &inputs, &rows)?;
    let count = views
        .iter()
        .flat_map(|v| v.targets)
        .filter(|&&t| t != PAD_ID)
        .count();
    if count == 0 {
        return Err(Error::EmptyBatch);
    }
    let scale = 1.0 / count as f64;
    let mut total = 0.0;
    let mut up = grads.is_some().then(|| pass.zero_grad());
    for (i, v) in views.iter().enumerate() {
        for (j, &tok) in v.targets.iter().enumerate() {
            if tok == PAD_ID {
                continue;
            }
            let r = pass.row(i, v.rows.start + j).expect("requested row");
            total -= pass.logprobs[[r, tok as usize]].f64();
            if let Some(up) = up.as_mut() {
                up[[r, tok as usize]] = T::of(-scale);
            }
        }
    }
    if let (Some(g), Some(up)) = (grads, up) {
        backward(p, &pass, &up, g)?;
    }
    Ok(total * scale)
}

/// CT term: next-token NLL over the full prompt-plus-winner sequences.
pub fn ct_loss<T: Scalar>(p: &Parameters<T>, seqs: &[&[u32]], grads: Option<&mut Parameters<T>>) -> Result<f64> {
    ntp_loss(p, seqs, grads)
}

fn sum_span<T: Scalar>(lp: &Array2<T>, first_row: usize, targets: &[u32]) -> f64 {
    targets
        .iter()
        .enumerate()
        .map(|(j, &t)| lp[[first_row + j, t as usize]].f64())
        .sum()
}

/// `log pi(winner | context)` and `log pi(loser | context)` for each pair,
/// answer span only.
pub fn reference_logprobs<T: Scalar>(p: &Parameters<T>, pairs: &[PairTokens]) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(64) {
        let seqs: Vec<Vec<u32>> = chunk
            .iter()
            .flat_map(|pt| [pt.winner_sequence(), pt.loser_sequence()])
            .collect();
        let views: Vec<Scored> = seqs
            .iter()
            .zip(chunk.iter().flat_map(|pt| [pt.context.len(), pt.context.len()]))
            .map(|(s, c)| answer_view(s, c))
            .collect::<Result<_>>()?;
        let inputs: Vec<&[u32]> = views.iter().map(|v| v.input).collect();
        let rows: Vec<Range<usize>> = views.iter().map(|v| v.rows.clone()).collect();
        let pass = forward_batch(p, &inputs, &rows)?;
        for i in 0..chunk.len() {
            let (w, l) = (&views[2 * i], &views[2 * i + 1]);
            let wr = pass.row(2 * i, w.rows.start).expect("requested row");
            let lr = pass.row(2 * i + 1, l.rows.start).expect("requested row");
            out.push((sum_span(&pass.logprobs, wr, w.targets), sum_span(&pass.logprobs, lr, l.targets)));
        }
    }
    Ok(out)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Combined PretrainRL loss `dpo_weight * DPO + lambda * CT`, sharing one
/// forward pass: each winner sequence is scored on its answer span for DPO
/// and on all positions for CT; each loser on its answer span only.
/// `extra_ct` sequences join the CT term only.
pub(crate) fn combined_loss<T: Scalar>(
    policy: &Parameters<T>,
    pairs: &[PairTokens],
    reference: &[(f64, f64)],
    beta: f64,
    dpo_weight: f64,
    lambda: f64,
    extra_ct: &[&[u32]],
    grads: Option<&mut Parameters<T>>,
) -> Result<LossValue> {
    if pairs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if reference.len() != pairs.len() {
        return Err(Error::ShapeMismatch("one reference value per pair required".into()));
    }
    if reference.iter().any(|(w, l)| !w.is_finite() || !l.is_finite()) {
        return Err(Error::NonFinite("reference log-probability".into()));
    }
    for pt in pairs {
        if pt.winner == pt.loser {
            return Err(Error::IdenticalPair(pt.triple_id.clone()));
        }
    }
    let use_dpo = dpo_weight != 0.0;
    let use_ct = lambda != 0.0;
    let winners: Vec<Vec<u32>> = pairs.iter().map(PairTokens::winner_sequence).collect();
    let losers: Vec<Vec<u32>> = if use_dpo {
        pairs.iter().map(PairTokens::loser_sequence).collect()
    } else {
        Vec::new()
    };
    // winner rows cover everything CT or DPO needs
    let mut inputs: Vec<&[u32]> = Vec::new();
    let mut rows: Vec<Range<usize>> = Vec::new();
    for (w, pt) in winners.iter().zip(pairs) {
        inputs.push(&w[..w.len() - 1]);
        rows.push(if use_ct { 0..w.len() - 1 } else { pt.context.len() - 1..w.len() - 1 });
    }
    for (l, pt) in losers.iter().zip(pairs) {
        inputs.push(&l[..l.len() - 1]);
        rows.push(pt.context.len() - 1..l.len() - 1);
    }
    if use_ct {
        for s in extra_ct {
            let v = ntp_view(s)?;
            inputs.push(v.input);
            rows.push(v.rows);
        }
    }
    let pass = forward_batch(policy, &inputs, &rows)?;
    let mut up = grads.is_some().then(|| pass.zero_grad());
    let b = pairs.len();
    let mut value = LossValue::default();

    if use_dpo {
        let inv_b = 1.0 / b as f64;
        let mut mean = 0.0;
        for (i, pt) in pairs.iter().enumerate() {
            let c = pt.context.len();
            let wr = pass.row(i, c - 1).expect("requested row");
            let lr = pass.row(b + i, c - 1).expect("requested row");
            let pw = sum_span(&pass.logprobs, wr, &pt.winner);
            let pl = sum_span(&pass.logprobs, lr, &pt.loser);
            let (rw, rl) = reference[i];
            let z = beta * ((pw - rw) - (pl - rl));
            // running mean: exact when every term is equal
            mean += (softplus(-z) - mean) / (i + 1) as f64;
            if let Some(up) = up.as_mut() {
                // d softplus(-z) / dz = -sigmoid(-z)
                let dz = -sigmoid(-z) * inv_b * dpo_weight * beta;
                for (j, &t) in pt.winner.iter().enumerate() {
                    up[[wr + j, t as usize]] += T::of(dz);
                }
                for (j, &t) in pt.loser.iter().enumerate() {
                    up[[lr + j, t as usize]] += T::of(-dz);
                }
            }
        }
        value.dpo = mean;
    }

    if use_ct {
        let mut targets: Vec<(usize, &[u32])> = Vec::new();
        for (i, w) in winners.iter().enumerate() {
            targets.push((pass.row(i, 0).expect("requested row"), &w[1..]));
        }
        let offset = b + losers.len();
        for (i, s) in extra_ct.iter().enumerate() {
            targets.push((pass.row(offset + i, 0).expect("requested row"), &s[1..]));
        }
        let count: usize = targets.iter().map(|(_, t)| t.iter().filter(|&&x| x != PAD_ID).count()).sum();
        if count == 0 {
            return Err(Error::EmptyBatch);
        }
        let inv = 1.0 / count as f64;
        for (r0, t) in targets {
            for (j, &tok) in t.iter().enumerate() {
                if tok == PAD_ID {
                    continue;
                }
                value.ct -= pass.logprobs[[r0 + j, tok as usize]].f64() * inv;
                if let Some(up) = up.as_mut() {
                    up[[r0 + j, tok as usize]] += T::of(-inv * lambda);
                }
            }
        }
    }
    value.total = dpo_weight * value.dpo + lambda * value.ct;
    if !value.total.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    if let (Some(g), Some(up)) = (grads, up) {
        backward(policy, &pass, &up, g)?;
    }
    Ok(value)
}

/// Mean over pairs of `-log sigmoid(beta * margin)`, where the margin is the
/// policy-minus-reference log-ratio of the winner minus that of the loser.
/// Only answer tokens (and EOS) are scored; the prompt only conditions.
pub fn dpo_loss<T: Scalar>(
    policy: &Parameters<T>,
    pairs: &[PairTokens],
    reference: &[(f64, f64)],
    beta: f64,
    grads: Option<&mut Parameters<T>>,
) -> Result<f64> {
    Ok(combined_loss(policy, pairs, reference, beta, 1.0, 0.0, &[], grads)?.dpo)
}

/// `dpo_loss + lambda * ct_loss` with CT over the winner sequences.
pub fn pretrainrl_loss<T: Scalar>(
    policy: &Parameters<T>,
    pairs: &[PairTokens],
    reference: &[(f64, f64)],
    beta: f64,
    lambda: f64,
    grads: Option<&mut Parameters<T>>,
) -> Result<LossValue> {
    combined_loss(policy, pairs, reference, beta, 1.0, lambda, &[], grads)
}
