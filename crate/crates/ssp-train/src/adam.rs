//! Adam updates over the flat parameter vector, with global-norm gradient
//! clipping and moment state that can ride inside a checkpoint.
//!
//! Complex parameters are handled implicitly: the flat vector interleaves
//! their real and imaginary parts, and each scalar gets its own moments, so
//! a complex entry is simply two independent real parameters.

use ssp_core::{Error, Result};
use ssp_model::TensorEntry;

use crate::config::TrainConfig;

/// First/second moment accumulators and the step counter, aligned with the
/// canonical flat parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState { step: 0, m: vec![0.0; len], v: vec![0.0; len] }
    }

    /// Serializes the state as extra checkpoint tensors; parameter loaders
    /// ignore them, the trainer's resume path reads them back.
    pub fn to_tensors(&self) -> Vec<TensorEntry> {
        vec![
            TensorEntry {
                name: "adam.step".to_owned(),
                dims: vec![1],
                complex: false,
                data: vec![self.step as f64],
            },
            TensorEntry {
                name: "adam.m".to_owned(),
                dims: vec![self.m.len()],
                complex: false,
                data: self.m.clone(),
            },
            TensorEntry {
                name: "adam.v".to_owned(),
                dims: vec![self.v.len()],
                complex: false,
                data: self.v.clone(),
            },
        ]
    }

    /// Restores state written by [`AdamState::to_tensors`]; `len` is the
    /// flat parameter count the state must match.
    pub fn from_tensors(tensors: &[TensorEntry], len: usize) -> Result<Self> {
        let find = |name: &str| -> Result<&TensorEntry> {
            tensors.iter().find(|t| t.name == name).ok_or_else(|| {
                Error::format(format!("checkpoint carries no optimizer tensor {name:?}"))
            })
        };
        let step_entry = find("adam.step")?;
        if step_entry.data.len() != 1 {
            return Err(Error::format("optimizer step tensor must hold one value".to_owned()));
        }
        let step = step_entry.data[0];
        if !(step >= 0.0) || step.fract() != 0.0 {
            return Err(Error::format(format!(
                "optimizer step count {step} is not a nonnegative integer"
            )));
        }
        let m = find("adam.m")?.data.clone();
        let v = find("adam.v")?.data.clone();
        if m.len() != len || v.len() != len {
            return Err(Error::format(format!(
                "optimizer moments have {}/{} entries, parameters need {len}",
                m.len(),
                v.len()
            )));
        }
        Ok(AdamState { step: step as u64, m, v })
    }
}

/// Euclidean norm of a flat gradient.
pub fn global_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// One Adam step in place: clip the gradient to the configured global norm,
/// advance the moments, and apply the bias-corrected update scaled by `lr`
/// (the caller owns the schedule). Returns the pre-clip gradient norm so
/// callers can log it.
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    config: &TrainConfig,
) -> Result<f64> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::config(format!(
            "optimizer shapes disagree: {} parameters, {} gradients, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::divergence(format!(
            "gradient entry {bad} is non-finite; refusing to update"
        )));
    }
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(Error::config(format!("learning rate {lr} must be positive and finite")));
    }

    let raw_norm = global_norm(grads);
    let scale = if raw_norm > config.clip_norm { config.clip_norm / raw_norm } else { 1.0 };

    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - config.beta1.powf(t);
    let bc2 = 1.0 - config.beta2.powf(t);
    for i in 0..params.len() {
        let g = grads[i] * scale;
        state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
        state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + config.eps_adam);
    }
    Ok(raw_norm)
}
