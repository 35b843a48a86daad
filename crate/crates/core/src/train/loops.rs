use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{combined_loss, ntp_loss, reference_logprobs, PairTokens, PolicyPair};
use super::{optimizer_step, AdamState, CtSource, Objective, TrainConfig};
use crate::corpus::RenderedExample;
use crate::model::{sequence_logprob, Checkpoint, ModelConfig, Parameters, Scalar};
use crate::{Error, Result};

/// One line of the step log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    pub loss: f64,
    pub dpo: f64,
    pub ct: f64,
    pub elapsed_ms: u64,
}

/// Writes the step log as TSV.
pub fn write_step_log(path: &Path, records: &[StepRecord]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "step\tepoch\tloss\tdpo\tct\telapsed_ms")?;
    for r in records {
        writeln!(f, "{}\t{}\t{}\t{}\t{}\t{}", r.step, r.epoch, r.loss, r.dpo, r.ct, r.elapsed_ms)?;
    }
    f.flush()?;
    Ok(())
}

/// Passed to the per-epoch callback of [`run_pretrain`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub steps: u64,
    /// Mean training loss over the epoch's steps.
    pub mean_loss: f64,
}

pub struct PretrainOutcome<T> {
    pub checkpoint: Checkpoint<T>,
    pub log: Vec<StepRecord>,
}

fn save_intermediate<T: Scalar>(
    dir: Option<&Path>,
    every: Option<u64>,
    step: u64,
    params: &Parameters<T>,
    rng: &ChaCha8Rng,
) -> Result<()> {
    if let (Some(dir), Some(every)) = (dir, every) {
        if every > 0 && step % every == 0 {
            Checkpoint::new(params.clone(), step, rng).save(&dir.join(format!("step-{step:06}.ckpt")))?;
        }
    }
    Ok(())
}

/// NTP pretraining from a fresh initialization.
///
/// `on_epoch(summary, params)` runs after every epoch; returning `false`
/// stops training early. With `plateau_tolerance` set, training also stops
/// once an epoch improves the mean loss by less than that fraction.
pub fn run_pretrain<T: Scalar>(
    examples: &[RenderedExample],
    model: &ModelConfig,
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochSummary, &Parameters<T>) -> Result<bool>,
) -> Result<PretrainOutcome<T>> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut params = Parameters::<T>::init(model)?;
    let mut state = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut log = Vec::new();
    let start = Instant::now();
    let mut prev_loss = f64::INFINITY;
    'epochs: for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_steps = 0u64;
        for batch in order.chunks(cfg.batch_size) {
            let seqs: Vec<&[u32]> = batch.iter().map(|&i| examples[i].full_tokens.as_slice()).collect();
            let mut grads = params.zeros_like();
            let loss = ntp_loss(&params, &seqs, Some(&mut grads))?;
            optimizer_step(&mut params, &grads, &mut state, cfg)?;
            epoch_loss += loss;
            epoch_steps += 1;
            log.push(StepRecord {
                step: state.step,
                epoch,
                loss,
                dpo: 0.0,
                ct: 0.0,
                elapsed_ms: start.elapsed().as_millis() as u64,
            });
            save_intermediate(checkpoint_dir, cfg.checkpoint_every, state.step, &params, &rng)?;
        }
        let summary = EpochSummary {
            epoch,
            steps: state.step,
            mean_loss: epoch_loss / epoch_steps.max(1) as f64,
        };
        if !on_epoch(&summary, &params)? {
            break 'epochs;
        }
        if let Some(tol) = cfg.plateau_tolerance {
            if prev_loss.is_finite() && (prev_loss - summary.mean_loss) / prev_loss < tol {
                break 'epochs;
            }
        }
        prev_loss = summary.mean_loss;
    }
    Ok(PretrainOutcome {
        checkpoint: Checkpoint::new(params, state.step, &rng),
        log,
    })
}

/// A question whose correct-answer probability is traced during training.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeQuestion {
    pub id: String,
    pub context: Vec<u32>,
    /// Answer tokens plus EOS.
    pub continuation: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: u64,
    pub question_id: String,
    pub logprob: f64,
}

pub struct RlOutcome<T> {
    pub checkpoint: Checkpoint<T>,
    pub log: Vec<StepRecord>,
    pub traces: Vec<TracePoint>,
    pub reference_hash: String,
    pub reference_intact: bool,
}

fn trace<T: Scalar>(p: &Parameters<T>, step: u64, probes: &[ProbeQuestion], out: &mut Vec<TracePoint>) -> Result<()> {
    for q in probes {
        out.push(TracePoint {
            step,
            question_id: q.id.clone(),
            logprob: sequence_logprob(p, &q.context, &q.continuation)?,
        });
    }
    Ok(())
}

/// PretrainRL from a base checkpoint. The reference is a frozen copy of the
/// base; the policy starts equal to it. `corpus` is only read when the CT
/// source interleaves corpus text. Probe probabilities are recorded at step
/// 0, every `probe_every` steps and at the end.
pub fn run_pretrainrl<T: Scalar>(
    pairs: &[PairTokens],
    base: &Checkpoint<T>,
    cfg: &TrainConfig,
    corpus: &[RenderedExample],
    probes: &[ProbeQuestion],
    probe_every: u64,
) -> Result<RlOutcome<T>> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if cfg.ct_source == CtSource::WinnersAndCorpus && corpus.is_empty() {
        return Err(Error::InvalidConfig("corpus interleave needs a corpus".into()));
    }
    let mut pp = PolicyPair::new(base.params.clone());
    let reference = reference_logprobs(pp.reference(), pairs)?;
    let (dpo_weight, lambda) = match cfg.objective {
        Objective::Combined => (1.0, cfg.lambda),
        Objective::WithoutCt => (1.0, 0.0),
        Objective::CtOnly => (0.0, cfg.lambda),
    };
    let mut state = AdamState::new(&pp.policy);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut log = Vec::new();
    let mut traces = Vec::new();
    trace(&pp.policy, 0, probes, &mut traces)?;
    let mut corpus_pos = 0usize;
    let start = Instant::now();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let bp: Vec<PairTokens> = batch.iter().map(|&i| pairs[i].clone()).collect();
            let br: Vec<(f64, f64)> = batch.iter().map(|&i| reference[i]).collect();
            let extra: Vec<&[u32]> = match cfg.ct_source {
                CtSource::Winners => Vec::new(),
                CtSource::WinnersAndCorpus => (0..batch.len())
                    .map(|_| {
                        let s = corpus[corpus_pos % corpus.len()].full_tokens.as_slice();
                        corpus_pos += 1;
                        s
                    })
                    .collect(),
            };
            let mut grads = pp.policy.zeros_like();
            let v = combined_loss(&pp.policy, &bp, &br, cfg.beta, dpo_weight, lambda, &extra, Some(&mut grads))?;
            optimizer_step(&mut pp.policy, &grads, &mut state, cfg)?;
            log.push(StepRecord {
                step: state.step,
                epoch,
                loss: v.total,
                dpo: v.dpo,
                ct: v.ct,
                elapsed_ms: start.elapsed().as_millis() as u64,
            });
            if probe_every > 0 && state.step % probe_every == 0 {
                trace(&pp.policy, state.step, probes, &mut traces)?;
            }
        }
    }
    if probe_every == 0 || state.step % probe_every != 0 {
        trace(&pp.policy, state.step, probes, &mut traces)?;
    }
    let reference_intact = pp.reference_intact();
    let reference_hash = pp.reference_hash().to_string();
    Ok(RlOutcome {
        checkpoint: Checkpoint::new(pp.policy, state.step, &rng),
        log,
        traces,
        reference_hash,
        reference_intact,
    })
}
