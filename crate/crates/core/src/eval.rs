//! ACC, HR@k, MRR@k and Prob@k from greedy and beam outputs, with
//! per-question inspection records.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{render_example, KnowledgeTriple, Vocabulary, World};
use crate::decode::{beam_search, greedy_decode, BeamHypothesis, Detokenizer};
use crate::model::LanguageModel;
use crate::{normalize, Error, Result};

/// Exact match after normalization against the triple's aliases.
pub fn judge(answer: &str, triple: &KnowledgeTriple) -> bool {
    let a = normalize(answer);
    !a.is_empty() && triple.normalized_aliases().contains(&a)
}

/// What ACC is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccMode {
    #[default]
    Greedy,
    BeamTop1,
}

/// How the probability of a hit question is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbMode {
    /// Probability of the best-ranked correct hypothesis.
    #[default]
    FirstCorrect,
    /// Total probability of all correct hypotheses in the beam.
    SumCorrect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub k: usize,
    /// Defaults to the longest answer (in tokens) plus 2.
    #[serde(default)]
    pub max_len: Option<usize>,
    #[serde(default)]
    pub acc_mode: AccMode,
    #[serde(default)]
    pub prob_mode: ProbMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: 50,
            max_len: None,
            acc_mode: AccMode::Greedy,
            prob_mode: ProbMode::FirstCorrect,
        }
    }
}

/// Outcome for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub triple_id: String,
    pub category: String,
    pub greedy_answer: String,
    pub greedy_correct: bool,
    pub beams: Vec<BeamHypothesis>,
    pub first_correct_rank: Option<usize>,
    pub correct_prob: Option<f64>,
}

impl EvalRecord {
    /// Judges greedy and beam outputs of `triple`.
    pub fn new(triple: &KnowledgeTriple, greedy: &BeamHypothesis, beams: Vec<BeamHypothesis>, mode: ProbMode) -> Self {
        let hits: Vec<&BeamHypothesis> = beams.iter().filter(|b| judge(&b.text, triple)).collect();
        let first_correct_rank = hits.first().map(|b| b.rank);
        let correct_prob = match mode {
            ProbMode::FirstCorrect => hits.first().map(|b| b.logprob.exp()),
            ProbMode::SumCorrect => (!hits.is_empty()).then(|| hits.iter().map(|b| b.logprob.exp()).sum::<f64>().min(1.0)),
        };
        Self {
            triple_id: triple.id.clone(),
            category: triple.category.clone(),
            greedy_answer: greedy.text.clone(),
            greedy_correct: judge(&greedy.text, triple),
            beams,
            first_correct_rank,
            correct_prob,
        }
    }
}

/// Aggregate metrics as fractions in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub n_questions: usize,
    pub acc: f64,
    pub hr: f64,
    pub mrr: f64,
    pub prob: f64,
}

impl Metrics {
    fn from_records<'a>(records: impl IntoIterator<Item = &'a EvalRecord>, acc: AccMode) -> Self {
        let (mut n, mut correct, mut hits, mut rr, mut prob) = (0usize, 0usize, 0usize, 0.0, 0.0);
        for r in records {
            n += 1;
            let acc_hit = match acc {
                AccMode::Greedy => r.greedy_correct,
                AccMode::BeamTop1 => r.first_correct_rank == Some(1),
            };
            correct += acc_hit as usize;
            if let Some(rank) = r.first_correct_rank {
                hits += 1;
                rr += 1.0 / rank as f64;
                prob += r.correct_prob.unwrap_or(0.0);
            }
        }
        let nf = n.max(1) as f64;
        Self {
            n_questions: n,
            acc: correct as f64 / nf,
            hr: hits as f64 / nf,
            mrr: rr / nf,
            prob: if hits == 0 { 0.0 } else { prob / hits as f64 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub max_len: usize,
    pub acc_mode: AccMode,
    pub prob_mode: ProbMode,
    pub overall: Metrics,
    pub per_category: BTreeMap<String, Metrics>,
}

/// Recomputes a report from its records; deterministic in record order.
pub fn report_from_records(records: &[EvalRecord], k: usize, max_len: usize, cfg: &EvalConfig) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut by_cat: BTreeMap<&str, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        by_cat.entry(r.category.as_str()).or_default().push(r);
    }
    Ok(EvalReport {
        k,
        max_len,
        acc_mode: cfg.acc_mode,
        prob_mode: cfg.prob_mode,
        overall: Metrics::from_records(records, cfg.acc_mode),
        per_category: by_cat
            .into_iter()
            .map(|(c, rs)| (c.to_string(), Metrics::from_records(rs, cfg.acc_mode)))
            .collect(),
    })
}

/// Longest answer in tokens plus 2.
pub fn default_max_len(triples: &[KnowledgeTriple], vocab: &Vocabulary) -> Result<usize> {
    let mut longest = 0;
    for t in triples {
        longest = longest.max(vocab.encode(&t.object)?.len());
    }
    Ok(longest + 2)
}

/// Greedy and beam decoding of every question, judged against its aliases.
pub fn evaluate<M: LanguageModel + ?Sized>(
    model: &M,
    vocab: &Vocabulary,
    questions: &[KnowledgeTriple],
    cfg: &EvalConfig,
) -> Result<(EvalReport, Vec<EvalRecord>)> {
    if questions.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if cfg.k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let max_len = match cfg.max_len {
        Some(m) => m,
        None => default_max_len(questions, vocab)?,
    };
    let mut records = Vec::with_capacity(questions.len());
    for t in questions {
        let ex = render_example(t, vocab)?;
        let ctx = ex.context();
        let greedy = greedy_decode(model, vocab as &dyn Detokenizer, ctx, max_len)?;
        let beams = beam_search(model, vocab as &dyn Detokenizer, ctx, cfg.k, max_len)?;
        records.push(EvalRecord::new(t, &greedy, beams, cfg.prob_mode));
    }
    let report = report_from_records(&records, cfg.k, max_len, cfg)?;
    Ok((report, records))
}

/// Fraction of tail questions whose greedy answer is their category's head
/// object.
pub fn head_permeation_probe<M: LanguageModel + ?Sized>(model: &M, vocab: &Vocabulary, world: &World) -> Result<f64> {
    let tails: Vec<&KnowledgeTriple> = world.tail_triples().collect();
    if tails.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let max_len = default_max_len(&world.triples, vocab)?;
    let mut permeated = 0usize;
    for t in &tails {
        let ex = render_example(t, vocab)?;
        let g = greedy_decode(model, vocab as &dyn Detokenizer, ex.context(), max_len)?;
        if let Some(head) = world.head_objects.get(&t.category) {
            if normalize(&g.text) == normalize(head) {
                permeated += 1;
            }
        }
    }
    Ok(permeated as f64 / tails.len() as f64)
}

/// Writes records as a flat TSV: one row per question.
pub fn write_records_tsv(path: &std::path::Path, records: &[EvalRecord]) -> Result<()> {
    use std::io::Write;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "triple_id\tcategory\tgreedy_answer\tgreedy_correct\tfirst_correct_rank\tcorrect_prob\ttop_answer\ttop_logprob")?;
    for r in records {
        let top = r.beams.first();
        writeln!(
            f,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.triple_id,
            r.category,
            r.greedy_answer,
            r.greedy_correct,
            r.first_correct_rank.map(|x| x.to_string()).unwrap_or_default(),
            r.correct_prob.map(|x| x.to_string()).unwrap_or_default(),
            top.map(|b| b.text.as_str()).unwrap_or(""),
            top.map(|b| b.logprob.to_string()).unwrap_or_default(),
        )?;
    }
    f.flush()?;
    Ok(())
}
