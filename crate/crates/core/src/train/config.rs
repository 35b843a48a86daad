use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// DPO strengths swept during tuning.
pub const BETA_SWEEP: [f64; 4] = [0.05, 0.1, 0.5, 1.0];

/// Which terms of the PretrainRL objective are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// DPO plus `lambda` times the CT term.
    #[default]
    Combined,
    /// DPO alone (`lambda = 0`).
    WithoutCt,
    /// CT alone, no preference term.
    CtOnly,
}

/// Sequences the CT term is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CtSource {
    /// Prompt plus winner of each pair in the batch.
    #[default]
    Winners,
    /// Winners plus as many corpus examples, drawn in stream order.
    WinnersAndCorpus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    pub learning_rate: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_eps")]
    pub adam_eps: f64,
    #[serde(default)]
    pub objective: Objective,
    #[serde(default)]
    pub ct_source: CtSource,
    /// Save an intermediate checkpoint every this many steps.
    #[serde(default)]
    pub checkpoint_every: Option<u64>,
    /// Pretraining stops after the first epoch whose mean loss improves on
    /// the previous epoch by less than this fraction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plateau_tolerance: Option<f64>,
}

fn default_beta() -> f64 {
    0.1
}
fn default_lambda() -> f64 {
    1.0
}
fn default_weight_decay() -> f64 {
    0.1
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl TrainConfig {
    pub fn new(learning_rate: f64, batch_size: usize, epochs: usize, seed: u64) -> Self {
        Self {
            beta: default_beta(),
            lambda: default_lambda(),
            learning_rate,
            weight_decay: default_weight_decay(),
            batch_size,
            epochs,
            seed,
            adam_beta1: default_beta1(),
            adam_beta2: default_beta2(),
            adam_eps: default_eps(),
            objective: Objective::Combined,
            ct_source: CtSource::Winners,
            checkpoint_every: None,
            plateau_tolerance: None,
        }
    }

    /// The CT weight actually applied under the configured objective.
    pub fn effective_lambda(&self) -> f64 {
        match self.objective {
            Objective::Combined => self.lambda,
            Objective::WithoutCt => 0.0,
            Objective::CtOnly => self.lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        if self.objective == Objective::CtOnly && self.lambda == 0.0 {
            return bad("ct-only objective needs a positive lambda");
        }
        if matches!(self.plateau_tolerance, Some(t) if !(t >= 0.0)) {
            return bad("plateau_tolerance must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return bad("adam constants out of range");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_defaults_and_round_trip() {
        let cfg: TrainConfig = toml::from_str("learning_rate = 0.001\nbatch_size = 8\nepochs = 1\nseed = 3\n").unwrap();
        assert_eq!(cfg.beta, 0.1);
        assert_eq!(cfg.lambda, 1.0);
        assert_eq!(cfg.weight_decay, 0.1);
        let back: TrainConfig = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn validation() {
        let mut c = TrainConfig::new(1e-3, 4, 1, 0);
        assert!(c.validate().is_ok());
        c.beta = 0.0;
        assert!(c.validate().is_err());
        c.beta = 0.1;
        c.lambda = -1.0;
        assert!(c.validate().is_err());
        c.lambda = 0.0;
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn ablation_lambdas() {
        let mut c = TrainConfig::new(1e-3, 4, 1, 0);
        c.lambda = 0.7;
        assert_eq!(c.effective_lambda(), 0.7);
        c.objective = Objective::WithoutCt;
        assert_eq!(c.effective_lambda(), 0.0);
        c.objective = Objective::CtOnly;
        assert_eq!(c.effective_lambda(), 0.7);
    }
}
