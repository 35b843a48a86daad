use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::KnowledgeTriple;
use crate::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const UNK_ID: u32 = 3;

const SPECIALS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Characters that attach to the previous token without a space.
const GLUE: &[char] = &['?', '.', ',', '!', ';', ':', '\''];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenizerMode {
    /// One token per entity name and per template word.
    EntityAtomic,
    /// One token per character.
    CharacterLevel,
}

/// Token alphabet with dense ids; ids `0..4` are PAD, BOS, EOS, UNK.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "VocabFile", try_from = "VocabFile")]
pub struct Vocabulary {
    tokens: Vec<String>,
    mode: TokenizerMode,
    index: HashMap<String, u32>,
    max_token_bytes: usize,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.mode == other.mode && self.tokens == other.tokens
    }
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    mode: TokenizerMode,
    tokens: Vec<String>,
}

impl From<Vocabulary> for VocabFile {
    fn from(v: Vocabulary) -> Self {
        VocabFile {
            mode: v.mode,
            tokens: v.tokens,
        }
    }
}

impl TryFrom<VocabFile> for Vocabulary {
    type Error = Error;
    fn try_from(f: VocabFile) -> Result<Self> {
        Vocabulary::from_tokens(f.mode, f.tokens)
    }
}

fn is_glued(token: &str) -> bool {
    token.starts_with(GLUE)
}

/// Splits template text into word tokens, with trailing punctuation and `'s`
/// as separate glued tokens.
fn split_words(text: &str, out: &mut BTreeSet<String>) {
    for chunk in text.split_whitespace() {
        let mut rest = chunk;
        let mut tail = Vec::new();
        loop {
            if let Some(stripped) = rest.strip_suffix("'s") {
                tail.push("'s");
                rest = stripped;
            } else if let Some(c) = rest.chars().last().filter(|c| GLUE.contains(c)) {
                let cut = rest.len() - c.len_utf8();
                tail.push(&rest[cut..]);
                rest = &rest[..cut];
            } else {
                break;
            }
        }
        if !rest.is_empty() {
            out.insert(rest.to_string());
        }
        out.extend(tail.into_iter().map(str::to_string));
    }
}

impl Vocabulary {
    /// Rebuilds a vocabulary from its token list; the first four tokens must
    /// be the specials.
    pub fn from_tokens(mode: TokenizerMode, tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens[..4].iter().zip(SPECIALS).any(|(a, b)| a != b) {
            return Err(Error::InvalidConfig("vocabulary must start with the special tokens".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate().skip(SPECIALS.len()) {
            if t.is_empty() || index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::InvalidConfig(format!("bad or duplicate token {t:?}")));
            }
            if mode == TokenizerMode::CharacterLevel && t.chars().count() != 1 {
                return Err(Error::InvalidConfig(format!("character token {t:?} is not one char")));
            }
        }
        let max_token_bytes = tokens.iter().skip(4).map(String::len).max().unwrap_or(0);
        Ok(Self {
            tokens,
            mode,
            index,
            max_token_bytes,
        })
    }

    fn with_specials(mode: TokenizerMode, body: BTreeSet<String>) -> Result<Self> {
        let tokens = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(body.into_iter().filter(|t| !SPECIALS.contains(&t.as_str())))
            .collect();
        Self::from_tokens(mode, tokens)
    }

    /// Builds the alphabet needed to render `triples` in `mode`.
    ///
    /// In entity-atomic mode every subject and alias becomes one token and the
    /// rest of each question is split into words.
    pub fn for_triples(triples: &[KnowledgeTriple], mode: TokenizerMode) -> Result<Self> {
        let mut body = BTreeSet::new();
        match mode {
            TokenizerMode::EntityAtomic => {
                for t in triples {
                    body.insert(t.subject.clone());
                    body.extend(t.object_aliases.iter().cloned());
                    match t.question.find(&t.subject) {
                        Some(at) => {
                            split_words(&t.question[..at], &mut body);
                            split_words(&t.question[at + t.subject.len()..], &mut body);
                        }
                        None => split_words(&t.question, &mut body),
                    }
                }
            }
            TokenizerMode::CharacterLevel => {
                body.insert(" ".to_string());
                for t in triples {
                    for s in std::iter::once(&t.question).chain(&t.object_aliases) {
                        body.extend(s.chars().map(String::from));
                    }
                }
            }
        }
        Self::with_specials(mode, body)
    }

    pub fn mode(&self) -> TokenizerMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn is_special(id: u32) -> bool {
        id <= UNK_ID
    }

    /// Encodes text into token ids. Fails on text outside the alphabet or, in
    /// entity-atomic mode, on non-canonical spacing.
    pub fn encode(&self, text: &str) -> Result<Vec<u32>> {
        match self.mode {
            TokenizerMode::CharacterLevel => text
                .chars()
                .map(|c| {
                    let mut buf = [0u8; 4];
                    self.id(c.encode_utf8(&mut buf)).ok_or_else(|| Error::Unencodable {
                        text: text.to_string(),
                        reason: format!("character {c:?} not in vocabulary"),
                    })
                })
                .collect(),
            TokenizerMode::EntityAtomic => self.encode_atomic(text),
        }
    }

    fn encode_atomic(&self, text: &str) -> Result<Vec<u32>> {
        let mut ids = Vec::new();
        let mut pos = 0;
        while pos < text.len() {
            let rest = &text[pos..];
            if rest.starts_with(' ') {
                pos += 1;
                continue;
            }
            let limit = self.max_token_bytes.min(rest.len());
            let found = (1..=limit).rev().filter(|&e| rest.is_char_boundary(e)).find_map(|e| {
                let cand = &rest[..e];
                let id = self.id(cand)?;
                let after = &rest[e..];
                let boundary = after.is_empty()
                    || after.starts_with(char::is_whitespace)
                    || after.starts_with(GLUE)
                    || cand.ends_with(GLUE);
                boundary.then_some((id, e))
            });
            match found {
                Some((id, e)) => {
                    ids.push(id);
                    pos += e;
                }
                None => {
                    let word = rest.split_whitespace().next().unwrap_or(rest);
                    return Err(Error::Unencodable {
                        text: text.to_string(),
                        reason: format!("no token matches {word:?}"),
                    });
                }
            }
        }
        if self.decode(&ids) != text {
            return Err(Error::Unencodable {
                text: text.to_string(),
                reason: "non-canonical spacing".into(),
            });
        }
        Ok(ids)
    }

    /// Decodes ids to text, skipping special tokens.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            if Self::is_special(id) {
                continue;
            }
            let Some(tok) = self.token(id) else { continue };
            if self.mode == TokenizerMode::EntityAtomic && !out.is_empty() && !is_glued(tok) {
                out.push(' ');
            }
            out.push_str(tok);
        }
        out
    }

    /// Text that precedes the answer when a prompt is rendered.
    pub(crate) fn prompt_text(&self, question: &str) -> String {
        match self.mode {
            TokenizerMode::EntityAtomic => question.to_string(),
            TokenizerMode::CharacterLevel => format!("{question} "),
        }
    }
}
