use super::{forward_batch, Parameters, Scalar};
use crate::corpus::EOS_ID;
use crate::{Error, Result};

/// Anything that assigns next-token log-probabilities to token prefixes.
///
/// Decoding, pool discovery and evaluation only need this interface, so
/// they run the same way over a transformer or over a fixed table.
pub trait LanguageModel {
    fn vocab_size(&self) -> usize;

    /// Longest sequence, prompt included, the model accepts.
    fn context_len(&self) -> usize;

    fn eos(&self) -> u32 {
        EOS_ID
    }

    /// Next-token log-probabilities (nats) after each prefix.
    fn next_logprobs(&self, prefixes: &[&[u32]]) -> Result<Vec<Vec<f64>>>;

    /// `log P(continuation | prompt)`.
    fn sequence_logprob(&self, prompt: &[u32], continuation: &[u32]) -> Result<f64> {
        if continuation.is_empty() {
            return Err(Error::EmptyContinuation);
        }
        let mut seq = prompt.to_vec();
        let mut total = 0.0;
        for &tok in continuation {
            total += self.next_logprobs(&[&seq])?[0][tok as usize];
            seq.push(tok);
        }
        Ok(total)
    }
}

impl<T: Scalar> LanguageModel for Parameters<T> {
    fn vocab_size(&self) -> usize {
        self.config().vocab_size
    }

    fn context_len(&self) -> usize {
        self.config().context_len
    }

    fn next_logprobs(&self, prefixes: &[&[u32]]) -> Result<Vec<Vec<f64>>> {
        if prefixes.is_empty() {
            return Ok(Vec::new());
        }
        let rows: Vec<_> = prefixes.iter().map(|p| p.len().saturating_sub(1)..p.len()).collect();
        let pass = forward_batch(self, prefixes, &rows)?;
        Ok(pass
            .logprobs
            .outer_iter()
            .map(|r| r.iter().map(|v| v.f64()).collect())
            .collect())
    }

    fn sequence_logprob(&self, prompt: &[u32], continuation: &[u32]) -> Result<f64> {
        super::sequence_logprob(self, prompt, continuation)
    }
}
