//! Next-token pretraining, the PretrainRL objective (DPO plus a continual
//! training term against a frozen reference) and AdamW.

mod config;
mod loops;
mod loss;
mod optim;

pub use config::{CtSource, Objective, TrainConfig, BETA_SWEEP};
pub use loops::{
    run_pretrain, run_pretrainrl, write_step_log, EpochSummary, PretrainOutcome, ProbeQuestion, RlOutcome, StepRecord,
    TracePoint,
};
pub use loss::{
    ct_loss, dpo_loss, ntp_loss, pretrainrl_loss, reference_logprobs, tokenize_pair, LossValue, PairTokens,
    PolicyPair,
};
pub use optim::{optimizer_step, AdamState};
