use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{DatasetFormat, LoadOptions, TokenizerMode, WorldSpec};
use crate::eval::EvalConfig;
use crate::model::{ModelConfig, Precision};
use crate::negsample::{InstanceThreshold, PoolConfig, PoolScope, PoolWeighting, TruthFilter};
use crate::train::{Objective, TrainConfig};
use crate::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

/// Where the knowledge triples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    World {
        spec: WorldSpec,
    },
    Dataset {
        /// Relative paths resolve against the manifest's directory.
        path: PathBuf,
        #[serde(default = "default_format")]
        format: DatasetFormat,
        #[serde(default = "default_separator")]
        answer_separator: String,
    },
}

fn default_format() -> DatasetFormat {
    DatasetFormat::Tsv
}

fn default_separator() -> String {
    "|".into()
}

impl DataSource {
    pub fn load_options(&self) -> Option<LoadOptions> {
        match self {
            DataSource::World { .. } => None,
            DataSource::Dataset {
                format,
                answer_separator,
                ..
            } => Some(LoadOptions {
                format: *format,
                answer_separator: answer_separator.clone(),
            }),
        }
    }
}

/// Questions used for evaluation and for building preference pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuestionSplit {
    /// Tail triples of a synthetic world; every triple for external data.
    #[default]
    Tail,
    All,
}

/// Architecture knobs. Vocabulary size and context length follow from the
/// data unless `context_len` is pinned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub layers: usize,
    pub model_dim: usize,
    pub heads: usize,
    #[serde(default = "default_mlp_ratio")]
    pub mlp_ratio: f64,
    #[serde(default = "default_precision")]
    pub precision: Precision,
    pub init_seed: u64,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_len: Option<usize>,
}

fn default_mlp_ratio() -> f64 {
    4.0
}
fn default_precision() -> Precision {
    Precision::F32
}
fn default_init_scale() -> f64 {
    0.02
}

impl ModelSpec {
    pub fn resolve(&self, vocab_size: usize, context_len: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            context_len: self.context_len.unwrap_or(context_len),
            layers: self.layers,
            model_dim: self.model_dim,
            heads: self.heads,
            mlp_ratio: self.mlp_ratio,
            precision: self.precision,
            init_seed: self.init_seed,
            init_scale: self.init_scale,
        }
    }
}

/// How losers are chosen for each preference pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Uniform draws from the category pool mined from beams.
    #[default]
    CategoryPool,
    /// The question's own high-ranked wrong beams.
    PerInstance,
    /// Uniform draws from the most popular objects.
    Popularity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    #[serde(default)]
    pub mode: SamplingMode,
    #[serde(default = "default_top_m")]
    pub top_m: usize,
    /// Losers per question.
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_sample_per_category")]
    pub sample_per_category: usize,
    pub seed: u64,
    #[serde(default)]
    pub weighting: PoolWeighting,
    #[serde(default)]
    pub truth_filter: TruthFilter,
    #[serde(default)]
    pub instance_threshold: InstanceThreshold,
    /// Top fraction of objects by popularity that forms the baseline pool.
    #[serde(default = "default_quantile")]
    pub popularity_quantile: f64,
    #[serde(default)]
    pub popularity_scope: PoolScope,
    /// Beam width for the discovery dumps; defaults to the eval width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beam_k: Option<usize>,
    /// Use an existing beam dump file instead of decoding the base model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_beams: Option<PathBuf>,
}

fn default_top_m() -> usize {
    20
}
fn default_n() -> usize {
    5
}
fn default_sample_per_category() -> usize {
    1000
}
fn default_quantile() -> f64 {
    0.1
}

impl SamplingConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            mode: SamplingMode::CategoryPool,
            top_m: default_top_m(),
            n: default_n(),
            sample_per_category: default_sample_per_category(),
            seed,
            weighting: PoolWeighting::Count,
            truth_filter: TruthFilter::Aliases,
            instance_threshold: InstanceThreshold::default(),
            popularity_quantile: default_quantile(),
            popularity_scope: PoolScope::Global,
            beam_k: None,
            external_beams: None,
        }
    }

    pub fn pool_config(&self) -> PoolConfig {
        PoolConfig {
            sample_per_category: self.sample_per_category,
            top_m: self.top_m,
            weighting: self.weighting,
            truth_filter: self.truth_filter,
            seed: self.seed,
        }
    }
}

/// Extra variants trained from the same base checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Ablation {
    /// DPO only (`lambda = 0`).
    #[serde(rename = "woNTP")]
    WoNtp,
    /// CT only, no preference term.
    #[serde(rename = "woDPO")]
    WoDpo,
    /// Full objective with popularity-sampled losers.
    #[serde(rename = "popularity")]
    Popularity,
}

impl Ablation {
    pub const ALL: [Ablation; 3] = [Ablation::WoNtp, Ablation::WoDpo, Ablation::Popularity];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::WoNtp => "woNTP",
            Ablation::WoDpo => "woDPO",
            Ablation::Popularity => "popularity",
        }
    }

    pub fn objective(self) -> Objective {
        match self {
            Ablation::WoNtp => Objective::WithoutCt,
            Ablation::WoDpo => Objective::CtOnly,
            Ablation::Popularity => Objective::Combined,
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown ablation {s:?}; expected woNTP, woDPO or popularity")))
    }
}

/// Everything a run needs. Serialized beside the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub spec_version: u32,
    pub name: String,
    /// Relative paths resolve against the manifest's directory.
    pub output_dir: PathBuf,
    #[serde(default = "default_tokenizer")]
    pub tokenizer: TokenizerMode,
    /// Extra passes over the rendered corpus.
    #[serde(default = "default_repetition")]
    pub repetition: usize,
    /// Shuffle seed of the rendered corpus dump.
    #[serde(default)]
    pub corpus_seed: u64,
    #[serde(default)]
    pub questions: QuestionSplit,
    /// Number of questions whose answer probability is traced during
    /// PretrainRL, and the tracing interval in steps.
    #[serde(default = "default_probe_questions")]
    pub probe_questions: usize,
    #[serde(default = "default_probe_every")]
    pub probe_every: u64,
    #[serde(default)]
    pub ablations: Vec<Ablation>,
    pub data: DataSource,
    pub model: ModelSpec,
    pub pretrain: TrainConfig,
    pub pretrainrl: TrainConfig,
    pub sampling: SamplingConfig,
    pub eval: EvalConfig,
}

fn default_tokenizer() -> TokenizerMode {
    TokenizerMode::EntityAtomic
}
fn default_repetition() -> usize {
    1
}
fn default_probe_questions() -> usize {
    8
}
fn default_probe_every() -> u64 {
    25
}

impl ExperimentManifest {
    pub fn from_toml(text: &str) -> Result<Self> {
        let m: Self = toml::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Reads a manifest and resolves its relative paths against the
    /// manifest's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Dataset {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let mut m = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        m.resolve_paths(base);
        Ok(m)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let DataSource::Dataset { path, .. } = &mut self.data {
            fix(path);
        }
        if let Some(p) = &mut self.sampling.external_beams {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::InvalidConfig(format!("{field}: {msg}")));
        if self.spec_version != MANIFEST_VERSION {
            return bad(
                "spec_version",
                format!("unsupported version {} (expected {MANIFEST_VERSION})", self.spec_version),
            );
        }
        if self.name.trim().is_empty() {
            return bad("name", "must not be empty".into());
        }
        if self.repetition == 0 {
            return bad("repetition", "must be at least 1".into());
        }
        if let DataSource::World { spec } = &self.data {
            spec.validate().or_else(|e| bad("data.spec", e.to_string()))?;
        }
        self.pretrain.validate().or_else(|e| bad("pretrain", e.to_string()))?;
        self.pretrainrl.validate().or_else(|e| bad("pretrainrl", e.to_string()))?;
        let s = &self.sampling;
        if s.top_m == 0 || s.n == 0 || s.sample_per_category == 0 {
            return bad("sampling", "top_m, n and sample_per_category must be positive".into());
        }
        if !(s.popularity_quantile > 0.0 && s.popularity_quantile <= 1.0) {
            return bad("sampling.popularity_quantile", "must lie in (0, 1]".into());
        }
        if self.eval.k == 0 || s.beam_k == Some(0) {
            return bad("eval.k", "beam width must be at least 1".into());
        }
        Ok(())
    }

    /// Replaces every seed with `seed` and gives the run its own output
    /// directory.
    pub fn with_seed_override(mut self, seed: u64) -> Self {
        if let DataSource::World { spec } = &mut self.data {
            spec.seed = seed;
        }
        self.corpus_seed = seed;
        self.model.init_seed = seed;
        self.pretrain.seed = seed;
        self.pretrainrl.seed = seed;
        self.sampling.seed = seed;
        let dir = self.output_dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        self.output_dir.set_file_name(format!("{dir}-seed{seed}"));
        self
    }

    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        if !self.ablations.contains(&ablation) {
            self.ablations.push(ablation);
        }
        self
    }

    /// Ablations in a fixed order without duplicates.
    pub fn ablation_set(&self) -> Vec<Ablation> {
        let mut v = self.ablations.clone();
        v.sort();
        v.dedup();
        v
    }

    /// The small synthetic study used by the examples and tests: 20
    /// categories of 50 subjects, a 10% head at 100x frequency, and a
    /// 2-layer, 64-wide model pretrained until the epoch loss stops falling
    /// by 3%, then one epoch of continual training at lr 3e-4.
    pub fn toy(name: &str, output_dir: impl Into<PathBuf>, seed: u64) -> Self {
        let mut spec = WorldSpec::two_level(20, 50, 0.1, 100.0, seed);
        spec.popularity_noise = 0.5;
        let mut pretrain = TrainConfig::new(1e-3, 32, 30, seed);
        pretrain.plateau_tolerance = Some(0.03);
        let pretrainrl = TrainConfig::new(3e-4, 16, 1, seed);
        Self {
            spec_version: MANIFEST_VERSION,
            name: name.into(),
            output_dir: output_dir.into(),
            tokenizer: TokenizerMode::EntityAtomic,
            repetition: 1,
            corpus_seed: seed,
            questions: QuestionSplit::Tail,
            probe_questions: default_probe_questions(),
            probe_every: default_probe_every(),
            ablations: Vec::new(),
            data: DataSource::World { spec },
            model: ModelSpec {
                layers: 2,
                model_dim: 64,
                heads: 4,
                mlp_ratio: 4.0,
                precision: Precision::F32,
                init_seed: seed,
                init_scale: 0.02,
                context_len: None,
            },
            pretrain,
            pretrainrl,
            sampling: SamplingConfig::new(seed),
            eval: EvalConfig {
                k: 10,
                ..EvalConfig::default()
            },
        }
    }
}
