use std::sync::Arc;

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ModelConfig, Scalar};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BlockIdx {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub w_qkv: usize,
    pub b_qkv: usize,
    pub w_o: usize,
    pub b_o: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub w_fc: usize,
    pub b_fc: usize,
    pub w_proj: usize,
    pub b_proj: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    pub tensors: Vec<TensorSpec>,
    pub total: usize,
}

pub(crate) const TOK_EMB: usize = 0;
pub(crate) const POS_EMB: usize = 1;

impl Layout {
    fn new(cfg: &ModelConfig) -> Self {
        let (v, c, d, f) = (cfg.vocab_size, cfg.context_len, cfg.model_dim, cfg.mlp_dim());
        let mut tensors = Vec::new();
        let mut total = 0;
        let mut push = |name: String, shape: Vec<usize>| {
            let spec = TensorSpec {
                name,
                shape,
                offset: total,
            };
            total += spec.numel();
            tensors.push(spec);
        };
        push("tok_emb".into(), vec![v, d]);
        push("pos_emb".into(), vec![c, d]);
        for l in 0..cfg.layers {
            let p = format!("blocks.{l}");
            push(format!("{p}.ln1.gain"), vec![d]);
            push(format!("{p}.ln1.bias"), vec![d]);
            push(format!("{p}.attn.w_qkv"), vec![d, 3 * d]);
            push(format!("{p}.attn.b_qkv"), vec![3 * d]);
            push(format!("{p}.attn.w_out"), vec![d, d]);
            push(format!("{p}.attn.b_out"), vec![d]);
            push(format!("{p}.ln2.gain"), vec![d]);
            push(format!("{p}.ln2.bias"), vec![d]);
            push(format!("{p}.mlp.w_fc"), vec![d, f]);
            push(format!("{p}.mlp.b_fc"), vec![f]);
            push(format!("{p}.mlp.w_proj"), vec![f, d]);
            push(format!("{p}.mlp.b_proj"), vec![d]);
        }
        push("ln_f.gain".into(), vec![d]);
        push("ln_f.bias".into(), vec![d]);
        push("head.weight".into(), vec![d, v]);
        push("head.bias".into(), vec![v]);
        Self { tensors, total }
    }

    pub fn block(&self, l: usize) -> BlockIdx {
        let b = 2 + 12 * l;
        BlockIdx {
            ln1_g: b,
            ln1_b: b + 1,
            w_qkv: b + 2,
            b_qkv: b + 3,
            w_o: b + 4,
            b_o: b + 5,
            ln2_g: b + 6,
            ln2_b: b + 7,
            w_fc: b + 8,
            b_fc: b + 9,
            w_proj: b + 10,
            b_proj: b + 11,
        }
    }

    pub fn lnf_g(&self) -> usize {
        self.tensors.len() - 4
    }
    pub fn lnf_b(&self) -> usize {
        self.tensors.len() - 3
    }
    pub fn head_w(&self) -> usize {
        self.tensors.len() - 2
    }
    pub fn head_b(&self) -> usize {
        self.tensors.len() - 1
    }
}

/// Model weights (or gradients, or optimizer moments) in one flat buffer with
/// a named-tensor layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<T> {
    config: ModelConfig,
    layout: Arc<Layout>,
    data: Vec<T>,
}

impl<T: Scalar> Parameters<T> {
    /// All-zero tensors; a zeroed model predicts the uniform distribution.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(config);
        Ok(Self {
            data: vec![T::zero(); layout.total],
            layout: Arc::new(layout),
            config: config.clone(),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            layout: Arc::clone(&self.layout),
            data: vec![T::zero(); self.data.len()],
        }
    }

    /// Seeded initialization: `N(0, init_scale)` for matrices and embeddings,
    /// residual output projections scaled by `1/sqrt(2 * layers)`, zero
    /// biases, unit norm gains.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let normal = Normal::new(0.0, config.init_scale.max(f64::MIN_POSITIVE))
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let residual_scale = 1.0 / (2.0 * config.layers as f64).sqrt();
        let layout = Arc::clone(&p.layout);
        for spec in &layout.tensors {
            let name = spec.name.as_str();
            let slice = &mut p.data[spec.offset..spec.offset + spec.numel()];
            if name.ends_with(".gain") {
                slice.fill(T::one());
            } else if spec.shape.len() == 2 {
                let scale = if name.ends_with("attn.w_out") || name.ends_with("mlp.w_proj") {
                    residual_scale
                } else {
                    1.0
                };
                for x in slice.iter_mut() {
                    let z: f64 = if config.init_scale == 0.0 { 0.0 } else { normal.sample(&mut rng) };
                    *x = T::of(z * scale);
                }
            }
        }
        Ok(p)
    }

    pub(crate) fn from_parts(config: ModelConfig, data: Vec<T>) -> Result<Self> {
        let mut p = Self::zeros(&config)?;
        if data.len() != p.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                p.data.len(),
                data.len()
            )));
        }
        p.data = data;
        Ok(p)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tensor_specs(&self) -> &[TensorSpec] {
        &self.layout.tensors
    }

    pub(crate) fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.config == other.config && self.data.len() == other.data.len()
    }

    /// Looks up a tensor by name.
    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        let spec = self.layout.tensors.iter().find(|s| s.name == name)?;
        Some(&self.data[spec.offset..spec.offset + spec.numel()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let spec = self.layout.tensors.iter().find(|s| s.name == name)?.clone();
        Some(&mut self.data[spec.offset..spec.offset + spec.numel()])
    }

    pub(crate) fn mat(&self, idx: usize) -> ArrayView2<'_, T> {
        let s = &self.layout.tensors[idx];
        ArrayView2::from_shape((s.shape[0], s.shape[1]), &self.data[s.offset..s.offset + s.numel()])
            .expect("layout shape")
    }

    pub(crate) fn vec(&self, idx: usize) -> ArrayView1<'_, T> {
        let s = &self.layout.tensors[idx];
        ArrayView1::from(&self.data[s.offset..s.offset + s.numel()])
    }

    pub(crate) fn mat_mut(&mut self, idx: usize) -> ArrayViewMut2<'_, T> {
        let s = &self.layout.tensors[idx];
        let (off, n, shape) = (s.offset, s.numel(), (s.shape[0], s.shape[1]));
        ArrayViewMut2::from_shape(shape, &mut self.data[off..off + n]).expect("layout shape")
    }

    pub(crate) fn vec_mut(&mut self, idx: usize) -> ArrayViewMut1<'_, T> {
        let s = &self.layout.tensors[idx];
        let (off, n) = (s.offset, s.numel());
        ArrayViewMut1::from(&mut self.data[off..off + n])
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: T, other: &Self) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + alpha * *b;
        }
    }

    pub fn scale(&mut self, alpha: T) {
        for a in &mut self.data {
            *a = *a * alpha;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// SHA-256 over the little-endian parameter bytes.
    pub fn content_hash(&self) -> String {
        let mut bytes = Vec::with_capacity(self.data.len() * T::PRECISION.bytes());
        T::write_le(&self.data, &mut bytes);
        crate::util::sha256_hex(&bytes)
    }
}
