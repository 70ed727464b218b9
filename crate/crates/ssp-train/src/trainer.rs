//! The training driver: deterministic window batching, gradient
//! accumulation, Adam updates on a cosine schedule, CSV logging, and
//! checkpoints that carry everything needed to resume bitwise.
//!
//! Windows are cut non-overlapping from each trajectory and reshuffled every
//! epoch with a generator seeded from `(seed, epoch)` alone, so a resumed
//! run revisits exactly the order the uninterrupted run would have used.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::s;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use ssp_core::{Error, GridField, Result};
use ssp_model::{load_params, save_params, Model, ModelConfig, ParamSet};
use ssp_pde::Dataset;

use crate::adam::{adam_update, AdamState};
use crate::config::{cosine_lr, LossWeights, TrainConfig};
use crate::loss::rollout_loss;

/// Loss components averaged over the windows of one epoch, plus wall time.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub rec: f64,
    pub lat: f64,
    pub phy: f64,
    pub norm: f64,
    pub orth: f64,
    pub total: f64,
    pub seconds: f64,
}

/// Outcome of a completed training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub history: Vec<EpochStats>,
    pub final_checkpoint: PathBuf,
    pub log_path: PathBuf,
}

/// Per-epoch shuffle generator; depends only on the seed and the epoch
/// index, never on how the run reached that epoch.
fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Non-overlapping `(trajectory, start_frame)` windows in deterministic
/// order.
fn collect_windows(dataset: &Dataset, frames: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (ti, traj) in dataset.trajectories.iter().enumerate() {
        let mut start = 0;
        while start + frames <= traj.len() {
            out.push((ti, start));
            start += frames;
        }
    }
    out
}

fn slice_window(dataset: &Dataset, traj: usize, start: usize, frames: usize) -> Result<GridField> {
    GridField::new(
        dataset.trajectories[traj]
            .states
            .data()
            .slice(s![start..start + frames, .., .., ..])
            .to_owned(),
    )
}

fn check_compatibility(
    dataset: &Dataset,
    config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<()> {
    if dataset.n_traj() == 0 {
        return Err(Error::config("training dataset holds no trajectories"));
    }
    if dataset.channels() != config.d_u {
        return Err(Error::config(format!(
            "dataset carries {} channels but the model expects d_u = {}",
            dataset.channels(),
            config.d_u
        )));
    }
    if dataset.resolution() != config.n_full {
        return Err(Error::config(format!(
            "dataset resolution {:?} does not match the model resolution {:?}",
            dataset.resolution(),
            config.n_full
        )));
    }
    let needed = train_config.window_frames(config.t);
    if dataset.l_total() < needed {
        return Err(Error::config(format!(
            "trajectories hold {} frames, a {}-step rollout of {}-frame windows needs {needed}",
            dataset.l_total(),
            train_config.n_roll,
            config.t
        )));
    }
    Ok(())
}

/// Flat ranges covered by the freeze list; every prefix must match at least
/// one parameter slot.
fn frozen_ranges(
    config: &ModelConfig,
    freeze: &[String],
) -> Result<Vec<std::ops::Range<usize>>> {
    if freeze.is_empty() {
        return Ok(Vec::new());
    }
    let layout = ssp_model::Layout::of(config)?;
    let mut ranges = Vec::new();
    for prefix in freeze {
        let mut hit = false;
        for slot in &layout.slots {
            if slot.name.starts_with(prefix.as_str()) {
                ranges.push(slot.offset..slot.offset + slot.len);
                hit = true;
            }
        }
        if !hit {
            return Err(Error::config(format!(
                "freeze entry {prefix:?} matches no parameter slot"
            )));
        }
    }
    Ok(ranges)
}

fn save_state(
    path: &Path,
    config: &ModelConfig,
    params: &ParamSet,
    state: &AdamState,
    completed_epochs: usize,
    seed: u64,
) -> Result<()> {
    let extras = vec![
        ("epoch".to_owned(), completed_epochs.to_string()),
        ("seed".to_owned(), seed.to_string()),
    ];
    save_params(path, config, &extras, params, &state.to_tensors())
}

/// Trains from a fresh seed-deterministic initialization.
pub fn train(
    dataset: &Dataset,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    weights: &LossWeights,
    out_dir: &Path,
) -> Result<TrainReport> {
    train_config.validate()?;
    let params = ParamSet::init(model_config, train_config.seed)?;
    train_with_init(dataset, model_config, train_config, weights, out_dir, params)
}

/// Like [`train`] but starting from caller-supplied parameters, for runs
/// that pin some slots to handcrafted values (usually combined with
/// [`TrainConfig::freeze`]).
pub fn train_with_init(
    dataset: &Dataset,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    weights: &LossWeights,
    out_dir: &Path,
    params: ParamSet,
) -> Result<TrainReport> {
    train_config.validate()?;
    let state = AdamState::new(params.flat_len());
    run(dataset, model_config, train_config, weights, out_dir, params, state, 0)
}

/// Continues a run from a checkpoint written by [`train`]. The model
/// configuration comes from the checkpoint; the training configuration must
/// be the one the original run used (in particular the same epoch count, or
/// the learning-rate schedule would disagree with the uninterrupted run).
pub fn train_resumed(
    dataset: &Dataset,
    train_config: &TrainConfig,
    weights: &LossWeights,
    out_dir: &Path,
    checkpoint: &Path,
) -> Result<TrainReport> {
    train_config.validate()?;
    let (data, params) = load_params(checkpoint)?;
    let completed: usize = data
        .extra("epoch")
        .ok_or_else(|| Error::format("checkpoint records no epoch count".to_owned()))?
        .parse()
        .map_err(|_| Error::format("checkpoint epoch count is not an integer".to_owned()))?;
    if completed >= train_config.epochs {
        return Err(Error::config(format!(
            "checkpoint already covers {completed} of {} epochs",
            train_config.epochs
        )));
    }
    let state = AdamState::from_tensors(&data.tensors, params.flat_len())?;
    let config = data.config.clone();
    run(dataset, &config, train_config, weights, out_dir, params, state, completed)
}

#[allow(clippy::too_many_arguments)]
fn run(
    dataset: &Dataset,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    weights: &LossWeights,
    out_dir: &Path,
    mut params: ParamSet,
    mut state: AdamState,
    start_epoch: usize,
) -> Result<TrainReport> {
    weights.validate()?;
    check_compatibility(dataset, model_config, train_config)?;
    let frozen = frozen_ranges(model_config, &train_config.freeze)?;
    let model = Model::new(model_config.clone())?;
    std::fs::create_dir_all(out_dir)?;

    let needed = train_config.window_frames(model_config.t);
    let windows = collect_windows(dataset, needed);
    if windows.is_empty() {
        return Err(Error::config("dataset yields no training windows"));
    }

    let log_path = out_dir.join("training_log.csv");
    let fresh_log = !log_path.exists()
        || std::fs::metadata(&log_path).map(|m| m.len() == 0).unwrap_or(true);
    let mut log = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)?;
    if fresh_log {
        writeln!(log, "epoch,rec,mean_lat,mean_phy,norm,orth,total,seconds")?;
    }

    // On divergence the parameters have not absorbed the bad update, so
    // they are the last good state; persist them before surfacing the error.
    let abort = |params: &ParamSet, state: &AdamState, completed: usize, err: Error| -> Error {
        let path = out_dir.join("checkpoint_aborted.sspc");
        if let Err(save_err) =
            save_state(&path, model_config, params, state, completed, train_config.seed)
        {
            return Error::divergence(format!(
                "{err}; additionally failed to save the abort checkpoint: {save_err}"
            ));
        }
        err
    };

    let mut flat = params.to_flat();
    let mut history = Vec::with_capacity(train_config.epochs - start_epoch);
    for epoch in start_epoch..train_config.epochs {
        let timer = Instant::now();
        let mut order = windows.clone();
        shuffle(&mut order, &mut epoch_rng(train_config.seed, epoch));

        let mut sums = EpochStats {
            epoch,
            rec: 0.0,
            lat: 0.0,
            phy: 0.0,
            norm: 0.0,
            orth: 0.0,
            total: 0.0,
            seconds: 0.0,
        };
        let mut seen = 0usize;
        for batch in order.chunks(train_config.batch_size) {
            let mut grads = ParamSet::zeros(model_config)?;
            for &(ti, start) in batch {
                let window = slice_window(dataset, ti, start, needed)?;
                let breakdown = match rollout_loss(
                    &model,
                    &params,
                    &window,
                    weights,
                    train_config.n_roll,
                    train_config.rec_through_projectors,
                    Some(&mut grads),
                ) {
                    Ok(b) => b,
                    Err(e) => return Err(abort(&params, &state, epoch, e)),
                };
                sums.rec += breakdown.rec;
                sums.lat += breakdown.mean_lat();
                sums.phy += breakdown.mean_phy();
                sums.norm += breakdown.norm;
                sums.orth += breakdown.mean_orth();
                sums.total += breakdown.total;
                seen += 1;
            }
            let mut gflat = grads.to_flat();
            let inv_b = 1.0 / batch.len() as f64;
            gflat.iter_mut().for_each(|g| *g *= inv_b);
            for range in &frozen {
                gflat[range.clone()].fill(0.0);
            }
            let lr = cosine_lr(train_config, epoch);
            if let Err(e) = adam_update(&mut flat, &gflat, &mut state, lr, train_config) {
                return Err(abort(&params, &state, epoch, e));
            }
            params.from_flat(&flat)?;
        }

        let inv = 1.0 / seen as f64;
        let stats = EpochStats {
            epoch,
            rec: sums.rec * inv,
            lat: sums.lat * inv,
            phy: sums.phy * inv,
            norm: sums.norm * inv,
            orth: sums.orth * inv,
            total: sums.total * inv,
            seconds: timer.elapsed().as_secs_f64(),
        };
        writeln!(
            log,
            "{},{},{},{},{},{},{},{:.3}",
            stats.epoch,
            stats.rec,
            stats.lat,
            stats.phy,
            stats.norm,
            stats.orth,
            stats.total,
            stats.seconds
        )?;
        history.push(stats);

        let completed = epoch + 1;
        if completed % train_config.checkpoint_every == 0 && completed < train_config.epochs {
            let path = out_dir.join(format!("checkpoint_epoch{completed:04}.sspc"));
            save_state(&path, model_config, &params, &state, completed, train_config.seed)?;
        }
    }

    let final_checkpoint = out_dir.join("checkpoint_final.sspc");
    save_state(
        &final_checkpoint,
        model_config,
        &params,
        &state,
        train_config.epochs,
        train_config.seed,
    )?;
    Ok(TrainReport { history, final_checkpoint, log_path })
}
