//! Finite-difference verification of the full training objective.
//!
//! The probed operation is the complete weighted rollout loss — encoder,
//! projector pair, propagator (temporal matrices, frequency gates, closure),
//! decoder, and all five loss terms — as a scalar function of the flat
//! parameter vector. Probe coordinates are drawn round-robin across the
//! named parameter slots, so every operation is guaranteed coverage instead
//! of leaving it to chance.

use ndarray::Array4;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use ssp_core::{DiffOp, GridField, Result};
use ssp_model::{Layout, Model, ModelConfig, ParamSet};
use ssp_train::{rollout_loss, LossWeights};

/// The training objective as a checkable scalar function of the parameters.
pub struct RolloutLossOp<'a> {
    pub model: &'a Model,
    pub weights: LossWeights,
    pub window: GridField,
    pub n_roll: usize,
    pub rec_through_projectors: bool,
    pub layout: Layout,
    /// Test hook: index of a gradient entry to corrupt, so a detection test
    /// can prove the checker actually checks.
    pub fault: Option<usize>,
}

impl RolloutLossOp<'_> {
    fn params_from(&self, flat: &[f64]) -> Result<ParamSet> {
        let mut params = ParamSet::zeros(self.model.config())?;
        params.from_flat(flat)?;
        Ok(params)
    }
}

impl DiffOp for RolloutLossOp<'_> {
    fn name(&self) -> &str {
        "rollout-objective"
    }

    fn param_len(&self) -> usize {
        self.layout.total
    }

    fn loss(&self, flat: &[f64]) -> Result<f64> {
        let params = self.params_from(flat)?;
        let breakdown = rollout_loss(
            self.model,
            &params,
            &self.window,
            &self.weights,
            self.n_roll,
            self.rec_through_projectors,
            None,
        )?;
        Ok(breakdown.total)
    }

    fn grad(&self, flat: &[f64]) -> Result<Vec<f64>> {
        let params = self.params_from(flat)?;
        let mut grads = ParamSet::zeros(self.model.config())?;
        rollout_loss(
            self.model,
            &params,
            &self.window,
            &self.weights,
            self.n_roll,
            self.rec_through_projectors,
            Some(&mut grads),
        )?;
        let mut flat_grad = grads.to_flat();
        if let Some(idx) = self.fault {
            let at = idx % flat_grad.len();
            flat_grad[at] += 1.0;
        }
        Ok(flat_grad)
    }

    fn param_label(&self, index: usize) -> String {
        self.layout.label(index)
    }
}

/// Picks `count` distinct probe coordinates, visiting the parameter slots
/// round-robin so each one is hit before any gets a second probe. Offsets
/// within a slot are drawn without replacement, deterministically in `seed`.
pub fn stratified_probes(layout: &Layout, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_slots = layout.slots.len();
    let mut chosen: Vec<std::collections::BTreeSet<usize>> =
        vec![std::collections::BTreeSet::new(); n_slots];
    let mut budget = count.min(layout.total);
    while budget > 0 {
        let mut progressed = false;
        for (s, slot) in layout.slots.iter().enumerate() {
            if budget == 0 {
                break;
            }
            if chosen[s].len() < slot.len {
                loop {
                    let off = rng.random_range(0..slot.len);
                    if chosen[s].insert(off) {
                        break;
                    }
                }
                budget -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    let mut probes: Vec<usize> = layout
        .slots
        .iter()
        .zip(&chosen)
        .flat_map(|(slot, offs)| offs.iter().map(move |o| slot.offset + o))
        .collect();
    probes.sort_unstable();
    probes
}

/// A deterministic random input window for probing without a dataset file:
/// `(n_roll + 1)` windows of `t` frames, values uniform in [-1, 1).
pub fn synthetic_window(config: &ModelConfig, n_roll: usize, seed: u64) -> Result<GridField> {
    let frames = (n_roll + 1) * config.t;
    let (nx, ny) = config.n_full;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x77F0_57A6_D7A8_4C21);
    let data = Array4::from_shape_simple_fn((frames, config.d_u, nx, ny), || {
        rng.random_range(-1.0..1.0)
    });
    GridField::new(data)
}
