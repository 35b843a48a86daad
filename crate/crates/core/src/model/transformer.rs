use std::ops::Range;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::params::{Layout, POS_EMB, TOK_EMB};
use super::{Parameters, Scalar};
use crate::{Error, Result};

const LN_EPS: f64 = 1e-5;

struct LnCache<T> {
    out: Array2<T>,
    xhat: Array2<T>,
    rstd: Vec<T>,
}

struct LayerCache<T> {
    ln1: LnCache<T>,
    qkv: Array2<T>,
    /// Per sequence, `heads * len * len` attention weights (lower triangle).
    probs: Vec<Vec<T>>,
    att: Array2<T>,
    ln2: LnCache<T>,
    fc_pre: Array2<T>,
    fc_act: Array2<T>,
}

/// Activations of one batched forward pass, kept for [`backward`].
pub struct ForwardPass<T> {
    spans: Vec<(usize, usize)>,
    tokens: Vec<u32>,
    positions: Vec<usize>,
    layers: Vec<LayerCache<T>>,
    lnf: LnCache<T>,
    rows: Vec<usize>,
    row_start: Vec<usize>,
    row_ranges: Vec<Range<usize>>,
    head_in: Array2<T>,
    /// Log-probability rows for the requested positions, in request order.
    pub logprobs: Array2<T>,
}

impl<T: Scalar> ForwardPass<T> {
    /// Index into [`ForwardPass::logprobs`] of position `pos` of sequence `seq`.
    pub fn row(&self, seq: usize, pos: usize) -> Option<usize> {
        let r = self.row_ranges.get(seq)?;
        r.contains(&pos).then(|| self.row_start[seq] + pos - r.start)
    }

    pub fn num_sequences(&self) -> usize {
        self.spans.len()
    }

    /// Log-probability of `token` at position `pos` of sequence `seq`.
    pub fn logprob(&self, seq: usize, pos: usize, token: u32) -> Option<T> {
        self.row(seq, pos).map(|r| self.logprobs[[r, token as usize]])
    }

    pub fn zero_grad(&self) -> Array2<T> {
        Array2::zeros(self.logprobs.raw_dim())
    }
}

fn check_tokens<T: Scalar>(p: &Parameters<T>, seq: &[u32]) -> Result<()> {
    let cfg = p.config();
    if seq.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if seq.len() > cfg.context_len {
        return Err(Error::SequenceTooLong {
            len: seq.len(),
            max: cfg.context_len,
        });
    }
    if let Some(&id) = seq.iter().find(|&&t| t as usize >= cfg.vocab_size) {
        return Err(Error::TokenOutOfRange {
            id,
            vocab: cfg.vocab_size,
        });
    }
    Ok(())
}

fn layer_norm<T: Scalar>(x: &Array2<T>, gain: ArrayView1<T>, bias: ArrayView1<T>) -> LnCache<T> {
    let (n, d) = x.dim();
    let mut xhat = Array2::zeros((n, d));
    let mut rstd = Vec::with_capacity(n);
    let inv_d = T::of(1.0 / d as f64);
    let eps = T::of(LN_EPS);
    for (row, mut out) in x.outer_iter().zip(xhat.outer_iter_mut()) {
        let mean = row.iter().copied().sum::<T>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let r = (var + eps).sqrt().recip();
        for (o, &v) in out.iter_mut().zip(row) {
            *o = (v - mean) * r;
        }
        rstd.push(r);
    }
    let mut out = &xhat * &gain;
    out += &bias;
    LnCache { out, xhat, rstd }
}

fn layer_norm_backward<T: Scalar>(
    cache: &LnCache<T>,
    gain: ArrayView1<T>,
    dy: &Array2<T>,
    grads: &mut Parameters<T>,
    (g_idx, b_idx): (usize, usize),
) -> Array2<T> {
    let (n, d) = dy.dim();
    let inv_d = T::of(1.0 / d as f64);
    let mut dx = Array2::zeros((n, d));
    let mut dgain = Array1::<T>::zeros(d);
    for i in 0..n {
        let (dy_r, xh) = (dy.row(i), cache.xhat.row(i));
        let mut m1 = T::zero();
        let mut m2 = T::zero();
        for j in 0..d {
            let dxh = dy_r[j] * gain[j];
            m1 = m1 + dxh;
            m2 = m2 + dxh * xh[j];
            dgain[j] = dgain[j] + dy_r[j] * xh[j];
        }
        m1 = m1 * inv_d;
        m2 = m2 * inv_d;
        let r = cache.rstd[i];
        let mut out = dx.row_mut(i);
        for j in 0..d {
            out[j] = r * (dy_r[j] * gain[j] - m1 - xh[j] * m2);
        }
    }
    grads.vec_mut(g_idx).zip_mut_with(&dgain, |a, &b| *a = *a + b);
    let dbias = dy.sum_axis(Axis(0));
    grads.vec_mut(b_idx).zip_mut_with(&dbias, |a, &b| *a = *a + b);
    dx
}

fn linear<T: Scalar>(x: &Array2<T>, w: ArrayView2<T>, b: ArrayView1<T>) -> Array2<T> {
    let mut y = x.dot(&w);
    y += &b;
    y
}

/// `grads[w] += x^T dy`, `grads[b] += colsum(dy)`, returns `dy w^T`.
fn linear_backward<T: Scalar>(
    x: &Array2<T>,
    dy: &Array2<T>,
    p: &Parameters<T>,
    grads: &mut Parameters<T>,
    (w_idx, b_idx): (usize, usize),
) -> Array2<T> {
    general_mat_mul(T::one(), &x.t(), dy, T::one(), &mut grads.mat_mut(w_idx));
    let db = dy.sum_axis(Axis(0));
    grads.vec_mut(b_idx).zip_mut_with(&db, |a, &b| *a = *a + b);
    dy.dot(&p.mat(w_idx).t())
}

fn gelu_consts<T: Scalar>() -> (T, T) {
    (T::of((2.0 / std::f64::consts::PI).sqrt()), T::of(0.044715))
}

fn gelu<T: Scalar>(x: &Array2<T>) -> Array2<T> {
    let (c, a) = gelu_consts::<T>();
    let half = T::of(0.5);
    x.mapv(|v| half * v * (T::one() + (c * (v + a * v * v * v)).tanh()))
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let (c, a) = gelu_consts::<T>();
    let half = T::of(0.5);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::of(3.0) * a * x * x)
}

fn attention<T: Scalar>(
    qkv: &Array2<T>,
    spans: &[(usize, usize)],
    heads: usize,
) -> (Array2<T>, Vec<Vec<T>>) {
    let (rows, three_d) = qkv.dim();
    let d = three_d / 3;
    let dh = d / heads;
    let scale = T::of(1.0 / (dh as f64).sqrt());
    let q = qkv.as_slice().expect("standard layout");
    let mut att = Array2::zeros((rows, d));
    let out = att.as_slice_mut().expect("standard layout");
    let mut all_probs = Vec::with_capacity(spans.len());
    let mut scores = Vec::new();
    for &(start, n) in spans {
        let mut probs = vec![T::zero(); heads * n * n];
        for h in 0..heads {
            let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
            for t in 0..n {
                let qt = &q[(start + t) * three_d + qo..][..dh];
                scores.clear();
                let mut max = T::neg_infinity();
                for s in 0..=t {
                    let ks = &q[(start + s) * three_d + ko..][..dh];
                    let mut dot = T::zero();
                    for j in 0..dh {
                        dot = dot + qt[j] * ks[j];
                    }
                    let sc = dot * scale;
                    max = max.max(sc);
                    scores.push(sc);
                }
                let mut sum = T::zero();
                for sc in scores.iter_mut() {
                    *sc = (*sc - max).exp();
                    sum = sum + *sc;
                }
                let prow = &mut probs[(h * n + t) * n..][..n];
                let o = &mut out[(start + t) * d + qo..][..dh];
                for s in 0..=t {
                    let w = scores[s] / sum;
                    prow[s] = w;
                    let vs = &q[(start + s) * three_d + vo..][..dh];
                    for j in 0..dh {
                        o[j] = o[j] + w * vs[j];
                    }
                }
            }
        }
        all_probs.push(probs);
    }
    (att, all_probs)
}

fn attention_backward<T: Scalar>(
    qkv: &Array2<T>,
    probs: &[Vec<T>],
    datt: &Array2<T>,
    spans: &[(usize, usize)],
    heads: usize,
) -> Array2<T> {
    let (rows, three_d) = qkv.dim();
    let d = three_d / 3;
    let dh = d / heads;
    let scale = T::of(1.0 / (dh as f64).sqrt());
    let q = qkv.as_slice().expect("standard layout");
    let dout = datt.as_slice().expect("standard layout");
    let mut dqkv = Array2::zeros((rows, three_d));
    let g = dqkv.as_slice_mut().expect("standard layout");
    let mut dp = Vec::new();
    for (&(start, n), probs) in spans.iter().zip(probs) {
        for h in 0..heads {
            let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
            for t in 0..n {
                let prow = &probs[(h * n + t) * n..][..n];
                let dot_ = &dout[(start + t) * d + qo..][..dh];
                dp.clear();
                let mut weighted = T::zero();
                for s in 0..=t {
                    let vs = &q[(start + s) * three_d + vo..][..dh];
                    let mut acc = T::zero();
                    for j in 0..dh {
                        acc = acc + dot_[j] * vs[j];
                    }
                    dp.push(acc);
                    weighted = weighted + prow[s] * acc;
                    let dv = &mut g[(start + s) * three_d + vo..][..dh];
                    for j in 0..dh {
                        dv[j] = dv[j] + prow[s] * dot_[j];
                    }
                }
                for s in 0..=t {
                    let ds = prow[s] * (dp[s] - weighted) * scale;
                    if ds == T::zero() {
                        continue;
                    }
                    for j in 0..dh {
                        let kj = q[(start + s) * three_d + ko + j];
                        let qj = q[(start + t) * three_d + qo + j];
                        g[(start + t) * three_d + qo + j] = g[(start + t) * three_d + qo + j] + ds * kj;
                        g[(start + s) * three_d + ko + j] = g[(start + s) * three_d + ko + j] + ds * qj;
                    }
                }
            }
        }
    }
    dqkv
}

fn log_softmax_rows<T: Scalar>(logits: &mut Array2<T>) {
    for mut row in logits.outer_iter_mut() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum = row.iter().map(|&v| (v - max).exp()).sum::<T>();
        let lse = max + sum.ln();
        row.mapv_inplace(|v| v - lse);
    }
}

/// Batched forward pass. `rows[i]` selects the positions of sequence `i`
/// whose next-token log-probabilities are computed.
pub fn forward_batch<T: Scalar>(
    p: &Parameters<T>,
    seqs: &[&[u32]],
    rows: &[Range<usize>],
) -> Result<ForwardPass<T>> {
    if seqs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if rows.len() != seqs.len() {
        return Err(Error::ShapeMismatch("one row range per sequence required".into()));
    }
    let cfg = p.config();
    let d = cfg.model_dim;
    let layout: &Layout = p.layout();
    let mut spans = Vec::with_capacity(seqs.len());
    let mut tokens = Vec::new();
    let mut positions = Vec::new();
    for (seq, r) in seqs.iter().zip(rows) {
        check_tokens(p, seq)?;
        if r.end > seq.len() || r.start > r.end {
            return Err(Error::ShapeMismatch(format!(
                "row range {r:?} outside sequence of length {}",
                seq.len()
            )));
        }
        spans.push((tokens.len(), seq.len()));
        tokens.extend_from_slice(seq);
        positions.extend(0..seq.len());
    }
    let n = tokens.len();

    let tok = p.mat(TOK_EMB);
    let pos = p.mat(POS_EMB);
    let mut x = Array2::<T>::zeros((n, d));
    for (r, mut row) in x.outer_iter_mut().enumerate() {
        let (te, pe) = (tok.row(tokens[r] as usize), pos.row(positions[r]));
        for j in 0..d {
            row[j] = te[j] + pe[j];
        }
    }

    let mut layers = Vec::with_capacity(cfg.layers);
    for l in 0..cfg.layers {
        let b = layout.block(l);
        let ln1 = layer_norm(&x, p.vec(b.ln1_g), p.vec(b.ln1_b));
        let qkv = linear(&ln1.out, p.mat(b.w_qkv), p.vec(b.b_qkv));
        let (att, probs) = attention(&qkv, &spans, cfg.heads);
        x += &linear(&att, p.mat(b.w_o), p.vec(b.b_o));
        let ln2 = layer_norm(&x, p.vec(b.ln2_g), p.vec(b.ln2_b));
        let fc_pre = linear(&ln2.out, p.mat(b.w_fc), p.vec(b.b_fc));
        let fc_act = gelu(&fc_pre);
        x += &linear(&fc_act, p.mat(b.w_proj), p.vec(b.b_proj));
        layers.push(LayerCache {
            ln1,
            qkv,
            probs,
            att,
            ln2,
            fc_pre,
            fc_act,
        });
    }
    let lnf = layer_norm(&x, p.vec(layout.lnf_g()), p.vec(layout.lnf_b()));

    let mut sel = Vec::new();
    let mut row_start = Vec::with_capacity(seqs.len());
    for (&(start, _), r) in spans.iter().zip(rows) {
        row_start.push(sel.len());
        sel.extend(r.clone().map(|t| start + t));
    }
    let head_in = lnf.out.select(Axis(0), &sel);
    let mut logprobs = linear(&head_in, p.mat(layout.head_w()), p.vec(layout.head_b()));
    log_softmax_rows(&mut logprobs);

    Ok(ForwardPass {
        spans,
        tokens,
        positions,
        layers,
        lnf,
        rows: sel,
        row_start,
        row_ranges: rows.to_vec(),
        head_in,
        logprobs,
    })
}

/// Log-probability rows for every position of `tokens`: row `t` is the
/// distribution of the token after `tokens[..=t]`.
pub fn forward<T: Scalar>(p: &Parameters<T>, tokens: &[u32]) -> Result<Array2<T>> {
    Ok(forward_batch(p, &[tokens], &[0..tokens.len()])?.logprobs)
}

/// Accumulates into `grads` the gradient of a scalar loss whose partial
/// derivatives with respect to `pass.logprobs` are `dlogp`.
pub fn backward<T: Scalar>(
    p: &Parameters<T>,
    pass: &ForwardPass<T>,
    dlogp: &Array2<T>,
    grads: &mut Parameters<T>,
) -> Result<()> {
    if dlogp.dim() != pass.logprobs.dim() {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient {:?} vs log-probs {:?}",
            dlogp.dim(),
            pass.logprobs.dim()
        )));
    }
    if !grads.same_layout(p) {
        return Err(Error::ShapeMismatch("gradient buffer layout differs from parameters".into()));
    }
    if dlogp.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("upstream gradient".into()));
    }
    let cfg = p.config();
    let layout = p.layout();
    let d = cfg.model_dim;

    // through log-softmax
    let mut dlogits = dlogp.clone();
    for (mut g, lp) in dlogits.outer_iter_mut().zip(pass.logprobs.outer_iter()) {
        let total = g.iter().copied().sum::<T>();
        if total == T::zero() && g.iter().all(|v| *v == T::zero()) {
            continue;
        }
        g.zip_mut_with(&lp, |gi, &l| *gi = *gi - l.exp() * total);
    }
    let dsel = linear_backward(&pass.head_in, &dlogits, p, grads, (layout.head_w(), layout.head_b()));
    let n = pass.tokens.len();
    let mut dh = Array2::<T>::zeros((n, d));
    for (i, &r) in pass.rows.iter().enumerate() {
        let mut row = dh.row_mut(r);
        row += &dsel.row(i);
    }
    let mut dx = layer_norm_backward(
        &pass.lnf,
        p.vec(layout.lnf_g()),
        &dh,
        grads,
        (layout.lnf_g(), layout.lnf_b()),
    );

    for l in (0..cfg.layers).rev() {
        let b = layout.block(l);
        let c = &pass.layers[l];
        let dact = linear_backward(&c.fc_act, &dx, p, grads, (b.w_proj, b.b_proj));
        let mut dpre = dact;
        dpre.zip_mut_with(&c.fc_pre, |g, &x| *g = *g * gelu_grad(x));
        let dln2 = linear_backward(&c.ln2.out, &dpre, p, grads, (b.w_fc, b.b_fc));
        dx += &layer_norm_backward(&c.ln2, p.vec(b.ln2_g), &dln2, grads, (b.ln2_g, b.ln2_b));

        let datt = linear_backward(&c.att, &dx, p, grads, (b.w_o, b.b_o));
        let dqkv = attention_backward(&c.qkv, &c.probs, &datt, &pass.spans, cfg.heads);
        let dln1 = linear_backward(&c.ln1.out, &dqkv, p, grads, (b.w_qkv, b.b_qkv));
        dx += &layer_norm_backward(&c.ln1, p.vec(b.ln1_g), &dln1, grads, (b.ln1_g, b.ln1_b));
    }

    {
        let mut g_tok = grads.mat_mut(TOK_EMB);
        for (r, &t) in pass.tokens.iter().enumerate() {
            let mut row = g_tok.row_mut(t as usize);
            row += &dx.row(r);
        }
    }
    let mut g_pos = grads.mat_mut(POS_EMB);
    for (r, &t) in pass.positions.iter().enumerate() {
        let mut row = g_pos.row_mut(t);
        row += &dx.row(r);
    }
    Ok(())
}

/// `log P(continuation | prompt)` in nats: the sum of the per-token
/// conditional log-probabilities.
pub fn sequence_logprob<T: Scalar>(p: &Parameters<T>, prompt: &[u32], continuation: &[u32]) -> Result<f64> {
    if continuation.is_empty() {
        return Err(Error::EmptyContinuation);
    }
    if prompt.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let total = prompt.len() + continuation.len();
    if total > p.config().context_len {
        return Err(Error::SequenceTooLong {
            len: total,
            max: p.config().context_len,
        });
    }
    let mut input = prompt.to_vec();
    input.extend_from_slice(&continuation[..continuation.len() - 1]);
    let rows = prompt.len() - 1..input.len();
    let pass = forward_batch(p, &[&input], &[rows.clone()])?;
    let mut acc = 0.0f64;
    for (i, &tok) in continuation.iter().enumerate() {
        acc += pass.logprobs[[i, tok as usize]].f64();
    }
    Ok(acc)
}

#[allow(dead_code)]
pub(crate) fn slice_rows<T: Scalar>(a: &Array2<T>, r: Range<usize>) -> Array2<T> {
    a.slice(s![r, ..]).to_owned()
}
