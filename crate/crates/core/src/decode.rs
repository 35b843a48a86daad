//! Beam search and greedy decoding with exact cumulative log-probabilities.

use std::cmp::Ordering;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::model::LanguageModel;
use crate::{Error, Result};

/// One decoded continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamHypothesis {
    /// Continuation token ids, EOS included when emitted.
    pub tokens: Vec<u32>,
    /// Surface text without EOS.
    pub text: String,
    /// Cumulative log-probability in nats, EOS factor included.
    pub logprob: f64,
    /// 1-based position in the returned list.
    pub rank: usize,
    pub finished: bool,
}

/// Turns continuation ids into surface text.
pub trait Detokenizer {
    fn detokenize(&self, tokens: &[u32]) -> String;
}

impl Detokenizer for Vocabulary {
    fn detokenize(&self, tokens: &[u32]) -> String {
        self.decode(tokens)
    }
}

type TableFn = dyn Fn(&[u32]) -> Vec<f64> + Send + Sync;

/// A language model given directly as a next-token table. Useful as an
/// oracle: for a history-independent table the exact top sequences can be
/// enumerated by brute force.
pub struct TableModel {
    symbols: Vec<String>,
    eos: u32,
    context_len: usize,
    table: Box<TableFn>,
}

impl TableModel {
    /// History-independent model with fixed next-token probabilities.
    pub fn fixed(symbols: &[&str], probs: &[f64], eos: u32) -> Result<Self> {
        if symbols.len() != probs.len() || eos as usize >= probs.len() {
            return Err(Error::InvalidConfig("table symbols, probabilities and eos disagree".into()));
        }
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|p| *p < 0.0 || !p.is_finite()) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig("table probabilities must form a distribution".into()));
        }
        let lp: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
        Ok(Self::from_fn(symbols, eos, move |_| lp.clone()))
    }

    /// Model whose log-probabilities are an arbitrary function of the prefix.
    pub fn from_fn(
        symbols: &[&str],
        eos: u32,
        f: impl Fn(&[u32]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            symbols: symbols.iter().map(|s| s.to_string()).collect(),
            eos,
            context_len: usize::MAX,
            table: Box::new(f),
        }
    }

    pub fn with_context_len(mut self, context_len: usize) -> Self {
        self.context_len = context_len;
        self
    }
}

impl LanguageModel for TableModel {
    fn vocab_size(&self) -> usize {
        self.symbols.len()
    }

    fn context_len(&self) -> usize {
        self.context_len
    }

    fn eos(&self) -> u32 {
        self.eos
    }

    fn next_logprobs(&self, prefixes: &[&[u32]]) -> Result<Vec<Vec<f64>>> {
        prefixes
            .iter()
            .map(|p| {
                if p.len() > self.context_len {
                    return Err(Error::SequenceTooLong {
                        len: p.len(),
                        max: self.context_len,
                    });
                }
                let row = (self.table)(p);
                if row.len() != self.symbols.len() {
                    return Err(Error::ShapeMismatch("table row has wrong width".into()));
                }
                Ok(row)
            })
            .collect()
    }
}

impl Detokenizer for TableModel {
    fn detokenize(&self, tokens: &[u32]) -> String {
        tokens
            .iter()
            .filter(|&&t| t != self.eos)
            .map(|&t| self.symbols[t as usize].as_str())
            .collect::<Vec<_>>()
            .join(",")
    }
}

#[derive(Clone)]
struct Hyp {
    tokens: Vec<u32>,
    logprob: f64,
    finished: bool,
}

fn hyp_order(a_lp: f64, a_tok: &[u32], b_lp: f64, b_tok: &[u32]) -> Ordering {
    b_lp.total_cmp(&a_lp).then_with(|| a_tok.cmp(b_tok))
}

fn budget<M: LanguageModel + ?Sized>(model: &M, prompt: &[u32], max_len: usize) -> Result<usize> {
    if max_len == 0 {
        return Err(Error::InvalidConfig("max_len must be at least 1".into()));
    }
    if prompt.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let ctx = model.context_len();
    if prompt.len() >= ctx {
        return Err(Error::SequenceTooLong {
            len: prompt.len() + 1,
            max: ctx,
        });
    }
    Ok(max_len.min(ctx - prompt.len()))
}

fn finish<D: Detokenizer + ?Sized>(hyps: Vec<Hyp>, detok: &D) -> Vec<BeamHypothesis> {
    let mut out: Vec<BeamHypothesis> = Vec::with_capacity(hyps.len());
    for h in hyps {
        if out.iter().any(|o| o.tokens == h.tokens) {
            continue;
        }
        out.push(BeamHypothesis {
            text: detok.detokenize(&h.tokens),
            tokens: h.tokens,
            logprob: h.logprob,
            rank: 0,
            finished: h.finished,
        });
    }
    out.sort_by(|a, b| hyp_order(a.logprob, &a.tokens, b.logprob, &b.tokens));
    for (i, h) in out.iter_mut().enumerate() {
        h.rank = i + 1;
    }
    out
}

/// Beam search keeping the `k` best continuations by cumulative
/// log-probability, with no length normalization.
///
/// Finished hypotheses are frozen and keep competing for the `k` slots.
/// Ties are broken by lexicographic token-id order. The result is sorted by
/// descending log-probability and ranked from 1.
pub fn beam_search<M, D>(model: &M, detok: &D, prompt: &[u32], k: usize, max_len: usize) -> Result<Vec<BeamHypothesis>>
where
    M: LanguageModel + ?Sized,
    D: Detokenizer + ?Sized,
{
    if k == 0 {
        return Err(Error::InvalidConfig("beam size must be at least 1".into()));
    }
    let steps = budget(model, prompt, max_len)?;
    let eos = model.eos();
    let mut beam = vec![Hyp {
        tokens: Vec::new(),
        logprob: 0.0,
        finished: false,
    }];
    for _ in 0..steps {
        let active: Vec<&Hyp> = beam.iter().filter(|h| !h.finished).collect();
        if active.is_empty() {
            break;
        }
        let prefixes: Vec<Vec<u32>> = active
            .iter()
            .map(|h| prompt.iter().chain(&h.tokens).copied().collect())
            .collect();
        let refs: Vec<&[u32]> = prefixes.iter().map(Vec::as_slice).collect();
        let rows = model.next_logprobs(&refs)?;

        // candidates as (logprob, parent, token); parent None = frozen hypothesis
        let mut cands: Vec<(f64, usize, Option<u32>)> = Vec::new();
        for (i, h) in beam.iter().enumerate() {
            if h.finished {
                cands.push((h.logprob, i, None));
            }
        }
        let active_idx: Vec<usize> = (0..beam.len()).filter(|&i| !beam[i].finished).collect();
        for (row, &parent) in rows.iter().zip(&active_idx) {
            let base = beam[parent].logprob;
            for (t, &lp) in row.iter().enumerate() {
                if lp.is_finite() {
                    cands.push((base + lp, parent, Some(t as u32)));
                }
            }
        }
        let key = |c: &(f64, usize, Option<u32>)| -> Vec<u32> {
            let mut t = beam[c.1].tokens.clone();
            t.extend(c.2);
            t
        };
        let cmp = |a: &(f64, usize, Option<u32>), b: &(f64, usize, Option<u32>)| {
            // cheap check first; sequences are only built on exact ties
            match b.0.total_cmp(&a.0) {
                Ordering::Equal => key(a).cmp(&key(b)),
                o => o,
            }
        };
        if cands.len() > k {
            cands.select_nth_unstable_by(k - 1, cmp);
            cands.truncate(k);
        }
        cands.sort_by(cmp);
        beam = cands
            .iter()
            .map(|c| match c.2 {
                None => beam[c.1].clone(),
                Some(t) => {
                    let mut tokens = beam[c.1].tokens.clone();
                    tokens.push(t);
                    Hyp {
                        tokens,
                        logprob: c.0,
                        finished: t == eos,
                    }
                }
            })
            .collect();
    }
    Ok(finish(beam, detok))
}

/// Temperature-0 decoding: the argmax token at each step, lowest id on ties,
/// until EOS or `max_len` tokens.
pub fn greedy_decode<M, D>(model: &M, detok: &D, prompt: &[u32], max_len: usize) -> Result<BeamHypothesis>
where
    M: LanguageModel + ?Sized,
    D: Detokenizer + ?Sized,
{
    let steps = budget(model, prompt, max_len)?;
    let eos = model.eos();
    let mut seq = prompt.to_vec();
    let mut logprob = 0.0;
    let mut finished = false;
    for _ in 0..steps {
        let row = model.next_logprobs(&[&seq])?.swap_remove(0);
        let mut best = 0;
        for (t, &lp) in row.iter().enumerate() {
            if lp > row[best] {
                best = t;
            }
        }
        logprob += row[best];
        seq.push(best as u32);
        if best as u32 == eos {
            finished = true;
            break;
        }
    }
    let tokens = seq[prompt.len()..].to_vec();
    Ok(BeamHypothesis {
        text: detok.detokenize(&tokens),
        tokens,
        logprob,
        rank: 1,
        finished,
    })
}

/// One ranked answer in a beam dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpBeam {
    pub rank: usize,
    pub text: String,
    pub logprob: f64,
}

/// Beam results for one question, the unit of the beam-dump file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamDump {
    pub question_id: String,
    pub category: String,
    pub beams: Vec<DumpBeam>,
}

impl BeamDump {
    pub fn new(question_id: &str, category: &str, hyps: &[BeamHypothesis]) -> Self {
        Self {
            question_id: question_id.to_string(),
            category: category.to_string(),
            beams: hyps
                .iter()
                .map(|h| DumpBeam {
                    rank: h.rank,
                    text: h.text.clone(),
                    logprob: h.logprob,
                })
                .collect(),
        }
    }
}

/// Writes one JSON object per line.
pub fn write_beam_dumps(path: &Path, dumps: &[BeamDump]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for d in dumps {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a beam-dump file; blank lines are skipped. Externally produced
/// dumps enter the pipeline through this function.
pub fn read_beam_dumps(path: &Path) -> Result<Vec<BeamDump>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let d: BeamDump = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(d);
    }
    Ok(out)
}
