use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;

use super::LanguageModel;
use crate::corpus::{render_example, KnowledgeTriple, Vocabulary, EOS_ID};
use crate::util::derived_rng;
use crate::{Error, Result};

/// Log-probability given to tokens outside the candidate set.
const FLOOR: f64 = -40.0;

/// A stand-in language model that answers every question from the corpus
/// frequency of its category's objects.
///
/// After a question context the next-token scores are
/// `sharpness * ln(freq(o)) + truth_bonus * [o is the truth] + noise`, over
/// the objects of the question's category, with Gaussian noise drawn per
/// (question, object). After an object token the model emits EOS. Only
/// single-token objects are supported, which is what the entity-atomic
/// tokenizer produces.
///
/// It is cheap enough to decode hundreds of thousands of questions, which
/// makes it useful for studying beam pools at scales where training a
/// transformer would dominate the runtime.
pub struct PriorModel {
    vocab_size: usize,
    context_len: usize,
    sharpness: f64,
    truth_bonus: f64,
    noise_sd: f64,
    seed: u64,
    /// Candidate objects and their frequencies, per category.
    categories: Vec<Vec<(u32, f64)>>,
    /// Question context -> (question id, category index, truth token).
    questions: HashMap<Vec<u32>, (String, usize, u32)>,
    answer_tokens: Vec<bool>,
}

impl PriorModel {
    pub fn new(
        triples: &[KnowledgeTriple],
        vocab: &Vocabulary,
        sharpness: f64,
        truth_bonus: f64,
        noise_sd: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut cat_index: HashMap<&str, usize> = HashMap::new();
        let mut freq: Vec<HashMap<u32, f64>> = Vec::new();
        let mut truth = Vec::with_capacity(triples.len());
        for t in triples {
            let toks = vocab.encode(&t.object)?;
            if toks.len() != 1 {
                return Err(Error::Unencodable {
                    text: t.object.clone(),
                    reason: "prior model needs single-token objects".into(),
                });
            }
            let next = cat_index.len();
            let c = *cat_index.entry(t.category.as_str()).or_insert(next);
            if c == freq.len() {
                freq.push(HashMap::new());
            }
            *freq[c].entry(toks[0]).or_default() += t.frequency.max(1) as f64;
            truth.push((c, toks[0]));
        }
        let mut answer_tokens = vec![false; vocab.len()];
        let categories: Vec<Vec<(u32, f64)>> = freq
            .into_iter()
            .map(|m| {
                let mut v: Vec<(u32, f64)> = m.into_iter().collect();
                v.sort_unstable_by_key(|&(tok, _)| tok);
                for &(tok, _) in &v {
                    answer_tokens[tok as usize] = true;
                }
                v
            })
            .collect();
        let mut questions = HashMap::with_capacity(triples.len());
        let mut context_len = 2;
        for (t, &(c, tok)) in triples.iter().zip(&truth) {
            let ctx = render_example(t, vocab)?.context().to_vec();
            context_len = context_len.max(ctx.len() + 2);
            questions.insert(ctx, (t.id.clone(), c, tok));
        }
        Ok(Self {
            vocab_size: vocab.len(),
            context_len,
            sharpness,
            truth_bonus,
            noise_sd,
            seed,
            categories,
            questions,
            answer_tokens,
        })
    }

    /// Answer distribution of one question; the noise is rederived from the
    /// seed on every call, so repeated queries agree exactly.
    fn answer_logprobs(&self, id: &str, category: usize, truth: u32) -> Vec<f64> {
        let mut rng = derived_rng(self.seed, &format!("prior/{id}"));
        let mut scores = vec![FLOOR; self.vocab_size];
        for &(tok, f) in &self.categories[category] {
            let noise: f64 = rng.sample(StandardNormal);
            let bonus = if tok == truth { self.truth_bonus } else { 0.0 };
            scores[tok as usize] = self.sharpness * f.ln() + bonus + self.noise_sd * noise;
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        scores.iter_mut().for_each(|s| *s -= lse);
        scores
    }
}

impl LanguageModel for PriorModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn context_len(&self) -> usize {
        self.context_len
    }

    fn next_logprobs(&self, prefixes: &[&[u32]]) -> Result<Vec<Vec<f64>>> {
        let uniform = -(self.vocab_size as f64).ln();
        Ok(prefixes
            .iter()
            .map(|p| {
                if let Some((id, c, truth)) = self.questions.get(*p) {
                    return self.answer_logprobs(id, *c, *truth);
                }
                match p.last() {
                    Some(&tok) if self.answer_tokens.get(tok as usize).copied().unwrap_or(false) => {
                        let mut v = vec![FLOOR; self.vocab_size];
                        v[EOS_ID as usize] = 0.0;
                        v
                    }
                    _ => vec![uniform; self.vocab_size],
                }
            })
            .collect())
    }
}
