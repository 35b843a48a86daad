use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{KnowledgeTriple, World};
use crate::eval::EvalReport;
use crate::Result;

/// File layout of a run directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactPaths {
    pub root: PathBuf,
}

impl ArtifactPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    fn at(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.root.join(rel)
    }

    pub fn manifest(&self) -> PathBuf {
        self.at("manifest.toml")
    }
    pub fn data(&self) -> PathBuf {
        self.at("data.json")
    }
    pub fn vocab(&self) -> PathBuf {
        self.at("vocab.json")
    }
    pub fn corpus(&self) -> PathBuf {
        self.at("corpus.tsv")
    }
    pub fn checkpoint(&self, method: &str) -> PathBuf {
        self.at(format!("checkpoints/{method}.ckpt"))
    }
    pub fn intermediate_dir(&self, method: &str) -> PathBuf {
        self.at(format!("checkpoints/{method}-steps"))
    }
    pub fn step_log(&self, method: &str) -> PathBuf {
        self.at(format!("logs/{method}.tsv"))
    }
    pub fn epoch_log(&self) -> PathBuf {
        self.at("logs/pretrain-epochs.tsv")
    }
    pub fn beams(&self) -> PathBuf {
        self.at("beams.jsonl")
    }
    pub fn pools(&self) -> PathBuf {
        self.at("pools.json")
    }
    pub fn pair_rows(&self, variant: &str) -> PathBuf {
        self.at(format!("pairs/{variant}.txt"))
    }
    pub fn pair_sidecar(&self, variant: &str) -> PathBuf {
        self.at(format!("pairs/{variant}.jsonl"))
    }
    pub fn traces(&self, method: &str) -> PathBuf {
        self.at(format!("traces/{method}.csv"))
    }
    pub fn method_report(&self, method: &str) -> PathBuf {
        self.at(format!("eval/{method}.json"))
    }
    pub fn records(&self, method: &str) -> PathBuf {
        self.at(format!("eval/{method}-records.tsv"))
    }
    pub fn meta(&self, stage: &str) -> PathBuf {
        self.at(format!("meta/{stage}.json"))
    }
    pub fn table_markdown(&self) -> PathBuf {
        self.at("report.md")
    }
    pub fn table_tsv(&self) -> PathBuf {
        self.at("report.tsv")
    }
    pub fn trajectories(&self) -> PathBuf {
        self.at("trajectories.csv")
    }
}

/// Triples plus whatever bookkeeping their source provides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataBundle {
    /// Present for synthetic worlds; holds the triples itself.
    pub world: Option<World>,
    /// Triples of an external dataset.
    #[serde(default)]
    pub triples: Vec<KnowledgeTriple>,
    pub popularity: BTreeMap<String, f64>,
}

impl DataBundle {
    pub fn triples(&self) -> &[KnowledgeTriple] {
        match &self.world {
            Some(w) => &w.triples,
            None => &self.triples,
        }
    }

    pub fn tail_triples(&self) -> Vec<KnowledgeTriple> {
        match &self.world {
            Some(w) => w.tail_triples().cloned().collect(),
            None => self.triples.clone(),
        }
    }
}

/// Evaluation of one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub checkpoint_hash: String,
    pub report: EvalReport,
    /// Synthetic worlds only.
    pub head_permeation: Option<f64>,
}

pub(crate) fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub(crate) fn read_json<V: serde::de::DeserializeOwned>(path: &Path) -> Result<V> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
