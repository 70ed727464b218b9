//! Autoregressive evaluation protocols: condition on the first frames of
//! each test trajectory, roll the model forward window by window with its
//! own predictions fed back, and score the predicted frames against the
//! stored truth.
//!
//! Steps are numbered from 1 at the first predicted frame. The plain
//! protocol scores every predicted step up to the horizon; the
//! extrapolation protocol scores only the steps beyond a supervised
//! horizon, which is where long-range stability shows. If any sample turns
//! non-finite, evaluation stops just before the earliest such step across
//! samples and the report records it.

use std::path::Path;

use ndarray::{s, Array4};
use ssp_core::{Error, Fft2, GridField, Result};
use ssp_model::{load_params, Model, ParamSet};
use ssp_pde::Dataset;

use crate::metrics::{band_errors_with, brms, e_max, rel_l2};
use crate::report::{mean_metrics, MetricsReport, StepMetrics};

/// Anything that can advance a window of `window_len` frames to the next
/// window: the trained model, or a stub standing in for it under test.
pub trait Stepper {
    fn window_len(&self) -> usize;

    /// Produces the next window for the given sample; `step` counts rollout
    /// steps from 1. Implementations backed by a real model ignore both
    /// indices.
    fn advance(&self, sample: usize, step: usize, window: &GridField) -> Result<GridField>;
}

/// The trained model as a stepper.
pub struct ModelStepper<'a> {
    pub model: &'a Model,
    pub params: &'a ParamSet,
}

impl Stepper for ModelStepper<'_> {
    fn window_len(&self) -> usize {
        self.model.config().t
    }

    fn advance(&self, _sample: usize, _step: usize, window: &GridField) -> Result<GridField> {
        Ok(self.model.forward_step(self.params, window)?.u_next)
    }
}

/// A perfect-prediction stub that answers every advance with the stored
/// truth; useful as an oracle in tests of the protocols themselves. Frames
/// requested beyond the trajectory end (the padding of a final partial
/// window) repeat the last stored frame.
pub struct OracleStepper<'a> {
    dataset: &'a Dataset,
    conditioning: usize,
    t: usize,
}

impl<'a> OracleStepper<'a> {
    pub fn new(dataset: &'a Dataset, conditioning: usize, t: usize) -> Self {
        OracleStepper { dataset, conditioning, t }
    }
}

impl Stepper for OracleStepper<'_> {
    fn window_len(&self) -> usize {
        self.t
    }

    fn advance(&self, sample: usize, step: usize, _window: &GridField) -> Result<GridField> {
        let truth = self.dataset.trajectories[sample].states.data();
        let (l_total, c, nx, ny) = truth.dim();
        let mut out = Array4::<f64>::zeros((self.t, c, nx, ny));
        for f in 0..self.t {
            let src = (self.conditioning + (step - 1) * self.t + f).min(l_total - 1);
            out.slice_mut(s![f, .., .., ..]).assign(&truth.slice(s![src, .., .., ..]));
        }
        GridField::new(out)
    }
}

/// Scores every predicted step from 1 to `horizon`.
pub fn rollout_eval<S: Stepper>(
    stepper: &S,
    dataset: &Dataset,
    conditioning: usize,
    horizon: usize,
) -> Result<MetricsReport> {
    extrapolation_eval(stepper, dataset, conditioning, 0, horizon)
}

/// Rolls out to `total_horizon` predicted frames but scores only the steps
/// in `(supervised_horizon, total_horizon]`.
pub fn extrapolation_eval<S: Stepper>(
    stepper: &S,
    dataset: &Dataset,
    conditioning: usize,
    supervised_horizon: usize,
    total_horizon: usize,
) -> Result<MetricsReport> {
    let t = stepper.window_len();
    if t == 0 {
        return Err(Error::config("stepper window length must be positive"));
    }
    if conditioning == 0 || conditioning % t != 0 {
        return Err(Error::config(format!(
            "conditioning length {conditioning} must be a positive multiple of the window length {t}"
        )));
    }
    if total_horizon <= supervised_horizon {
        return Err(Error::config(format!(
            "total horizon {total_horizon} must exceed the supervised horizon {supervised_horizon}"
        )));
    }
    if dataset.n_traj() == 0 {
        return Err(Error::config("evaluation dataset holds no trajectories"));
    }
    if dataset.l_total() < conditioning + total_horizon {
        return Err(Error::config(format!(
            "trajectories hold {} frames, conditioning {conditioning} plus horizon \
             {total_horizon} needs {}",
            dataset.l_total(),
            conditioning + total_horizon
        )));
    }

    let n_samples = dataset.n_traj();
    let mut preds = Vec::with_capacity(n_samples);
    let mut diverged_at: Option<usize> = None;
    for sample in 0..n_samples {
        let (p, d) = predict_sample(stepper, dataset, sample, conditioning, total_horizon)?;
        if let Some(step) = d {
            diverged_at = Some(diverged_at.map_or(step, |cur| cur.min(step)));
        }
        preds.push(p);
    }

    // Evaluate up to the step before the earliest divergence.
    let evaluated_end = diverged_at.map_or(total_horizon, |d| (d - 1).min(total_horizon));
    let first_step = supervised_horizon + 1;
    let (_, _, nx, ny) = preds[0].dim();
    let fft = Fft2::new(nx, ny)?;
    let mut per_step = Vec::new();
    for step in first_step..=evaluated_end {
        let mut samples = Vec::with_capacity(n_samples);
        for (sample, pred) in preds.iter().enumerate() {
            let truth = dataset.trajectories[sample].states.data();
            let frame = conditioning + step - 1;
            let p = pred.slice(s![step - 1..step, .., .., ..]);
            let u = truth.slice(s![frame..frame + 1, .., .., ..]);
            let at = |e: Error| Error::config(format!("evaluated step {step}: {e}"));
            let (f_low, f_mid, f_high, f_mse) = band_errors_with(&fft, p, u).map_err(at)?;
            samples.push(StepMetrics {
                rel_l2: rel_l2(p, u).map_err(at)?,
                e_max: e_max(p, u).map_err(at)?,
                brms: brms(p, u).map_err(at)?,
                f_low,
                f_mid,
                f_high,
                f_mse,
            });
        }
        per_step.push(mean_metrics(&samples));
    }

    Ok(MetricsReport {
        first_step,
        summary: mean_metrics(&per_step),
        per_step,
        horizon: total_horizon,
        n_samples,
        diverged_at,
    })
}

/// Rolls one sample out to `horizon` predicted frames. Returns the
/// predictions and the 1-based step of the first non-finite value, if any;
/// rows at and beyond a divergence are left zero and must not be read.
fn predict_sample<S: Stepper>(
    stepper: &S,
    dataset: &Dataset,
    sample: usize,
    conditioning: usize,
    horizon: usize,
) -> Result<(Array4<f64>, Option<usize>)> {
    let t = stepper.window_len();
    let truth = dataset.trajectories[sample].states.data();
    let (_, c, nx, ny) = truth.dim();
    let mut window =
        GridField::new(truth.slice(s![conditioning - t..conditioning, .., .., ..]).to_owned())?;
    let mut preds = Array4::<f64>::zeros((horizon, c, nx, ny));
    let steps = horizon.div_ceil(t);
    for r in 1..=steps {
        window = match stepper.advance(sample, r, &window) {
            Ok(w) => w,
            Err(Error::Divergence(_)) => return Ok((preds, Some((r - 1) * t + 1))),
            Err(e) => return Err(e),
        };
        if (window.batch(), window.channels(), window.nx(), window.ny()) != (t, c, nx, ny) {
            return Err(Error::config(format!(
                "stepper produced a {:?} window for a ({t}, {c}, {nx}, {ny}) trajectory",
                (window.batch(), window.channels(), window.nx(), window.ny())
            )));
        }
        for f in 0..t {
            let global = (r - 1) * t + f;
            if global >= horizon {
                break;
            }
            let frame = window.data().slice(s![f, .., .., ..]);
            if !frame.iter().all(|v| v.is_finite()) {
                return Ok((preds, Some(global + 1)));
            }
            preds.slice_mut(s![global, .., .., ..]).assign(&frame);
        }
    }
    Ok((preds, None))
}

/// Loads a checkpoint and runs the plain rollout protocol with it.
pub fn eval_checkpoint(
    checkpoint: &Path,
    dataset: &Dataset,
    conditioning: usize,
    horizon: usize,
) -> Result<MetricsReport> {
    let (data, params) = load_params(checkpoint)?;
    let model = Model::new(data.config)?;
    rollout_eval(&ModelStepper { model: &model, params: &params }, dataset, conditioning, horizon)
}
