use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{KnowledgeTriple, Vocabulary, BOS_ID, EOS_ID};
use crate::{Error, Result};

/// A triple rendered to token ids: `full_tokens = BOS ++ prompt ++ answer ++ EOS`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedExample {
    pub triple_id: String,
    pub prompt_tokens: Vec<u32>,
    pub answer_tokens: Vec<u32>,
    pub full_tokens: Vec<u32>,
}

impl RenderedExample {
    /// `BOS ++ prompt`, the conditioning context fed to the model.
    pub fn context(&self) -> &[u32] {
        &self.full_tokens[..1 + self.prompt_tokens.len()]
    }
}

pub fn render_example(triple: &KnowledgeTriple, vocab: &Vocabulary) -> Result<RenderedExample> {
    render_parts(&triple.id, &triple.question, &triple.object, vocab)
}

pub(crate) fn render_parts(
    id: &str,
    question: &str,
    answer: &str,
    vocab: &Vocabulary,
) -> Result<RenderedExample> {
    let prompt_tokens = vocab.encode(&vocab.prompt_text(question))?;
    let answer_tokens = vocab.encode(answer)?;
    if answer_tokens.is_empty() {
        return Err(Error::Unencodable {
            text: answer.to_string(),
            reason: "empty answer".into(),
        });
    }
    let mut full_tokens = Vec::with_capacity(prompt_tokens.len() + answer_tokens.len() + 2);
    full_tokens.push(BOS_ID);
    full_tokens.extend(&prompt_tokens);
    full_tokens.extend(&answer_tokens);
    full_tokens.push(EOS_ID);
    Ok(RenderedExample {
        triple_id: id.to_string(),
        prompt_tokens,
        answer_tokens,
        full_tokens,
    })
}

/// Renders every triple `frequency * repetition` times and shuffles the
/// stream with `seed`.
pub fn render_corpus(
    triples: &[KnowledgeTriple],
    vocab: &Vocabulary,
    seed: u64,
    repetition: usize,
) -> Result<Vec<RenderedExample>> {
    let mut stream = Vec::new();
    for t in triples {
        let ex = render_example(t, vocab)?;
        let copies = t.frequency as usize * repetition;
        stream.extend(std::iter::repeat_n(ex, copies));
    }
    stream.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(stream)
}

/// One line of a corpus dump.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusDumpRow {
    pub triple_id: String,
    pub prompt: String,
    pub answer: String,
}

fn check_field(s: &str) -> Result<&str> {
    if s.contains(['\t', '\n', '\r']) {
        return Err(Error::Unencodable {
            text: s.to_string(),
            reason: "tab or newline inside corpus dump field".into(),
        });
    }
    Ok(s)
}

/// Writes `triple_id \t prompt \t answer`, one example per line.
pub fn write_corpus_dump<W: Write>(
    mut out: W,
    stream: &[RenderedExample],
    vocab: &Vocabulary,
) -> Result<()> {
    for ex in stream {
        let prompt = vocab.decode(&ex.prompt_tokens);
        let answer = vocab.decode(&ex.answer_tokens);
        writeln!(
            out,
            "{}\t{}\t{}",
            check_field(&ex.triple_id)?,
            check_field(prompt.trim_end())?,
            check_field(&answer)?
        )?;
    }
    Ok(())
}

pub fn read_corpus_dump(path: &Path) -> Result<Vec<CorpusDumpRow>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut rows = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        let mut parts = line.splitn(3, '\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(id), Some(p), Some(a)) => rows.push(CorpusDumpRow {
                triple_id: id.into(),
                prompt: p.into(),
                answer: a.into(),
            }),
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: "expected three tab-separated fields".into(),
                })
            }
        }
    }
    Ok(rows)
}
