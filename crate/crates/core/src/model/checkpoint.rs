use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelConfig, Parameters, Precision, Scalar};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"LTLCKPT\x01";
const FORMAT_VERSION: u32 = 1;

/// Serialized position of a ChaCha8 stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    /// Decimal string; the word position is a u128.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        let bad = |what: &str| Error::Checkpoint(format!("bad rng {what}"));
        let bytes = hex::decode(&self.seed).map_err(|_| bad("seed"))?;
        let seed: [u8; 32] = bytes.try_into().map_err(|_| bad("seed"))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().map_err(|_| bad("word position"))?);
        Ok(rng)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    precision: Precision,
    offset: usize,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    step: u64,
    rng: RngState,
    tensors: Vec<TensorEntry>,
}

/// Model weights plus the training step and RNG position they were saved at.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub params: Parameters<T>,
    pub step: u64,
    pub rng: RngState,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(params: Parameters<T>, step: u64, rng: &ChaCha8Rng) -> Self {
        Self {
            params,
            step,
            rng: RngState::capture(rng),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        self.params.config()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let width = T::PRECISION.bytes();
        let tensors = self
            .params
            .tensor_specs()
            .iter()
            .map(|s| TensorEntry {
                name: s.name.clone(),
                shape: s.shape.clone(),
                precision: T::PRECISION,
                offset: s.offset * width,
                len: s.numel() * width,
            })
            .collect();
        let mut config = self.params.config().clone();
        config.precision = T::PRECISION;
        let header = serde_json::to_vec(&Header {
            format_version: FORMAT_VERSION,
            config,
            step: self.step,
            rng: self.rng.clone(),
            tensors,
        })?;
        let mut out = Vec::with_capacity(16 + header.len() + self.params.len() * width + 32);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        T::write_le(self.params.as_slice(), &mut out);
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < MAGIC.len() + 8 + 32 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(bad("checksum mismatch"));
        }
        let hlen = u64::from_le_bytes(body[8..16].try_into().unwrap()) as usize;
        let header_bytes = body.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(header_bytes)?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}",
                header.format_version
            )));
        }
        if header.config.precision != T::PRECISION {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {:?} weights, loader expects {:?}",
                header.config.precision,
                T::PRECISION
            )));
        }
        let payload = &body[16 + hlen..];
        let expected = Parameters::<T>::zeros(&header.config)?;
        let width = T::PRECISION.bytes();
        if payload.len() != expected.len() * width || header.tensors.len() != expected.tensor_specs().len() {
            return Err(bad("payload size does not match config"));
        }
        for (entry, spec) in header.tensors.iter().zip(expected.tensor_specs()) {
            if entry.name != spec.name
                || entry.shape != spec.shape
                || entry.offset != spec.offset * width
                || entry.len != spec.numel() * width
            {
                return Err(Error::Checkpoint(format!("tensor table mismatch at {}", entry.name)));
            }
        }
        let params = Parameters::from_parts(header.config, T::read_le(payload))?;
        Ok(Self {
            params,
            step: header.step,
            rng: header.rng,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// SHA-256 of the serialized checkpoint.
    pub fn hash(&self) -> Result<String> {
        Ok(crate::util::sha256_hex(&self.to_bytes()?))
    }
}
