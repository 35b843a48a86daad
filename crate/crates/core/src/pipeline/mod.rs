//! Manifest-driven experiment runs.
//!
//! A run walks a fixed stage order and persists every artifact under the
//! manifest's output directory. Each stage writes a sidecar under `meta/`
//! holding a hash of its configuration and input files plus the hashes of
//! its outputs; a stage is skipped only when both still match, so a
//! changed input always forces recomputation downstream.

mod artifacts;
mod manifest;
mod report;
mod stages;

pub use artifacts::{ArtifactPaths, DataBundle, MethodReport};
pub use manifest::{
    Ablation, DataSource, ExperimentManifest, ModelSpec, QuestionSplit, SamplingConfig, SamplingMode,
    MANIFEST_VERSION,
};
pub use report::{directional_checks, load_method_reports, render_report, report, Check, StudyReport};
pub use stages::{run, RunSummary, StageRun};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Generate,
    Pretrain,
    BaseEval,
    Beam,
    Pool,
    Pairs,
    TrainRl,
    Eval,
    Ablations,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Generate,
        Stage::Pretrain,
        Stage::BaseEval,
        Stage::Beam,
        Stage::Pool,
        Stage::Pairs,
        Stage::TrainRl,
        Stage::Eval,
        Stage::Ablations,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Pretrain => "pretrain",
            Stage::BaseEval => "base-eval",
            Stage::Beam => "beam",
            Stage::Pool => "pool",
            Stage::Pairs => "pairs",
            Stage::TrainRl => "train-rl",
            Stage::Eval => "eval",
            Stage::Ablations => "ablations",
            Stage::Report => "report",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown stage {s:?}")))
    }
}
