//! Evaluation of trained spectral propagation models.
//!
//! Three layers: frame-wise error metrics (relative L2, worst-case
//! pointwise, boundary-ring RMS, and banded spectral distortion), rollout
//! protocols that condition on stored trajectory prefixes and score
//! autoregressive predictions (optionally only beyond a supervised
//! horizon), and an ablation harness that retrains component-removed
//! variants under a shared seed and budget and tabulates the comparison.

pub mod ablate;
pub mod metrics;
pub mod report;
pub mod rollout;

pub use ablate::{
    ablation_run, find_row, standard_variants, write_ablation_csv, AblationRow, AblationVariant,
    BackboneAblation,
};
pub use metrics::{band_counts, band_errors, band_errors_with, brms, e_max, rel_l2};
pub use report::{mean_metrics, MetricsReport, StepMetrics, CSV_HEADER};
pub use rollout::{
    eval_checkpoint, extrapolation_eval, rollout_eval, ModelStepper, OracleStepper, Stepper,
};
