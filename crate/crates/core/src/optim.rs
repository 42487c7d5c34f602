//! AdamW with optional bias correction and a linear warm-up schedule.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{contract_err, shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub bias_correction: bool,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            bias_correction: true,
        }
    }
}

/// First and second moment estimates for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Number of steps taken so far.
    pub t: u64,
}

impl AdamWState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One update with learning rate `lr` (already scaled by the schedule).
///
/// `p ← p − lr·c·m / (√v + ε) − lr·λ·p`, where `c = √(1 − β₂ᵗ) / (1 − β₁ᵗ)`
/// when bias correction is on and `1` otherwise. Weight decay is decoupled:
/// it acts on the parameters, not through the moments.
pub fn adamw_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamWState,
    lr: f64,
    cfg: &AdamWConfig,
) -> Result<()> {
    if params.len() != grads.len()
        || params.len() != state.m.len()
        || state.m.len() != state.v.len()
    {
        return Err(shape_err!(
            "{} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        ));
    }
    if let Some(k) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Domain(alloc::format!(
            "non-finite gradient at index {k}"
        )));
    }
    state.t += 1;
    let t = state.t as f64;
    let step = if cfg.bias_correction {
        lr * libm::sqrt(1.0 - libm::pow(cfg.beta2, t)) / (1.0 - libm::pow(cfg.beta1, t))
    } else {
        lr
    };
    for k in 0..params.len() {
        let g = grads[k];
        state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g;
        state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g;
        params[k] -= step * state.m[k] / (libm::sqrt(state.v[k]) + cfg.eps);
        if cfg.weight_decay != 0.0 {
            params[k] -= lr * cfg.weight_decay * params[k];
        }
    }
    Ok(())
}

/// Number of warm-up steps: `ceil(fraction · total)`. Products within
/// rounding noise of an integer (`0.1 · 30`) count as that integer.
pub fn warmup_steps(total_steps: usize, fraction: f64) -> usize {
    let x = fraction * total_steps as f64;
    let nearest = libm::round(x);
    if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        libm::ceil(x) as usize
    }
}

/// Learning rate for 1-based `step`: `lr · step / W` while `step ≤ W`, then
/// `lr`.
pub fn lr_at(step: usize, warmup: usize, lr: f64) -> f64 {
    if step < warmup {
        lr * step as f64 / warmup as f64
    } else {
        lr
    }
}

pub fn validate_warmup_fraction(fraction: f64) -> Result<()> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(contract_err!("warmup fraction {fraction} outside [0, 1)"));
    }
    Ok(())
}
