use crate::model::{Parameters, Scalar};
use crate::{Error, Result};

use super::TrainConfig;

/// First and second moment estimates of AdamW.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Parameters<T>,
    pub v: Parameters<T>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &Parameters<T>) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One AdamW update with bias-corrected moments and decoupled weight decay
/// (`w -= lr * wd * w` before the adaptive step).
pub fn optimizer_step<T: Scalar>(
    params: &mut Parameters<T>,
    grads: &Parameters<T>,
    state: &mut AdamState<T>,
    cfg: &TrainConfig,
) -> Result<()> {
    if !grads.same_layout(params) || !state.m.same_layout(params) {
        return Err(Error::ShapeMismatch("optimizer buffers do not match parameters".into()));
    }
    if !grads.all_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = T::of(1.0 / (1.0 - b1.powi(t)));
    let c2 = T::of(1.0 / (1.0 - b2.powi(t)));
    let (b1, b2) = (T::of(b1), T::of(b2));
    let (one, lr, eps) = (T::one(), T::of(cfg.learning_rate), T::of(cfg.adam_eps));
    let decay = one - T::of(cfg.learning_rate * cfg.weight_decay);
    let m = state.m.as_mut_slice();
    let v = state.v.as_mut_slice();
    for (((w, &g), m), v) in params.as_mut_slice().iter_mut().zip(grads.as_slice()).zip(m).zip(v) {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let update = (*m * c1) / ((*v * c2).sqrt() + eps);
        *w = *w * decay - lr * update;
    }
    if !params.all_finite() {
        return Err(Error::NonFinite("parameters after update".into()));
    }
    Ok(())
}
