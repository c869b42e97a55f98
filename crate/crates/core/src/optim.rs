//! Adam with bias correction and the cosine learning-rate schedule.

use crate::field::{BlockId, FieldModel, FieldParams};
use crate::Real;

/// `lr1 + 0.5 (lr0 - lr1) (1 + cos(pi t / T))`; iterations past `T` stay
/// at `lr1`.
pub fn cosine_lr(t: u64, max_iters: u64, lr0: f64, lr1: f64) -> f64 {
    if max_iters == 0 || t >= max_iters {
        return lr1;
    }
    if t == 0 {
        return lr0;
    }
    let x = t as f64 / max_iters as f64;
    lr1 + 0.5 * (lr0 - lr1) * (1.0 + libm::cos(core::f64::consts::PI * x))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moments mirroring [`FieldParams`] block for block.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<R> {
    pub m: FieldParams<R>,
    pub v: FieldParams<R>,
    pub step: u64,
}

impl<R: Real> AdamState<R> {
    pub fn new(model: &FieldModel) -> Self {
        AdamState { m: FieldParams::zeros_like(model), v: FieldParams::zeros_like(model), step: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// A gradient entry was NaN or infinite; nothing changed.
    SkippedNonFinite,
}

/// One bias-corrected Adam update of the listed blocks.
pub fn adam_step<R: Real>(
    params: &mut FieldParams<R>,
    grads: &FieldParams<R>,
    state: &mut AdamState<R>,
    lr: f64,
    cfg: &AdamConfig,
    blocks: &[BlockId],
) -> StepOutcome {
    if blocks.iter().any(|b| grads.block(*b).iter().any(|g| !g.is_finite())) {
        return StepOutcome::SkippedNonFinite;
    }
    state.step += 1;
    let t = state.step;
    for b in blocks {
        adam_update_slice(
            params.block_mut(*b),
            grads.block(*b),
            state.m.block_mut(*b),
            state.v.block_mut(*b),
            t,
            lr,
            cfg,
        );
    }
    StepOutcome::Applied
}

/// Adam on raw slices; `t` is the 1-based step count after this update.
pub fn adam_update_slice<R: Real>(params: &mut [R], grads: &[R], m: &mut [R], v: &mut [R], t: u64, lr: f64, cfg: &AdamConfig) {
    let b1 = R::of(cfg.beta1);
    let b2 = R::of(cfg.beta2);
    let c1 = R::of(1.0 / (1.0 - libm::pow(cfg.beta1, t as f64)));
    let c2 = R::of(1.0 / (1.0 - libm::pow(cfg.beta2, t as f64)));
    let eps = R::of(cfg.epsilon);
    let lr = R::of(lr);
    let one = R::one();
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let mh = m[i] * c1;
        let vh = v[i] * c2;
        params[i] -= lr * mh / (vh.sqrt() + eps);
    }
}
