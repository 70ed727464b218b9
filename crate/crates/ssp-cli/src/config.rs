//! Run configuration: one TOML file drives every subcommand.
//!
//! Parsing is strict on purpose. Unknown keys are rejected everywhere, and
//! the quantities that define the physics of a run — the solver step `dt`,
//! diffusivities, the window length `t`, the retained mode counts `m` — have
//! no fallback values: leaving them out is an error, not a silent default.
//! Knobs that only tune the optimization (learning rate, batch size, ...)
//! default to the library defaults and are echoed back in full, so the
//! `effective_config.toml` written next to the artifacts always re-parses to
//! the exact configuration that ran.
//!
//! Relative paths inside the config (datasets, checkpoints) are resolved
//! against the output directory, which makes a config plus its output
//! directory a relocatable unit.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ssp_core::{Error, Result};
use ssp_model::{BackboneMode, DecoderKind, EncoderKind, ModelConfig};
use ssp_pde::{PdeKind, PdeSpec};
use ssp_train::{LossWeights, TrainConfig};

/// Top-level run description; the named sections mirror the library layers.
/// Only the sections a subcommand needs have to be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed: parameter initialization, training shuffles, and probe
    /// selection all derive from it. Dataset generation uses
    /// `data.seed_base` when given, this seed otherwise.
    #[serde(default)]
    pub seed: u64,
    /// Output directory; every artifact (datasets by default, checkpoints,
    /// CSV logs, plots, the echoed config) lands here.
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pde: Option<PdeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradcheck: Option<GradcheckSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablate: Option<AblateSection>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Equation and time discretization. `kind` selects which of the optional
/// physical parameters are required; stating a parameter the chosen equation
/// does not use is rejected rather than ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSection {
    /// One of `heat`, `advection-diffusion`, `reaction-diffusion`.
    pub kind: String,
    /// Solver time step (always required; there is no default physics).
    pub dt: f64,
    /// Solver steps per saved frame.
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    /// Diffusivity; required by `heat` and `advection-diffusion`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    /// Advection velocity `[cx, cy]`; required by `advection-diffusion`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<[f64; 2]>,
    /// Channel diffusivities; required by `reaction-diffusion`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diff_u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diff_v: Option<f64>,
    /// Constant forcing offset in the u-channel reaction; required by
    /// `reaction-diffusion`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<f64>,
    /// Scale on the whole reaction term (reaction-diffusion only); defaults
    /// to 1, i.e. the equation as written.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reaction_strength: Option<f64>,
}

fn default_substeps() -> usize {
    1
}

impl PdeSection {
    /// Builds the validated equation description, enforcing that exactly the
    /// parameters of the chosen kind are present.
    pub fn to_spec(&self) -> Result<PdeSpec> {
        let kind = PdeKind::from_tag(&self.kind)?;
        let require = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| {
                Error::config(format!("[pde] {} requires an explicit `{name}`", self.kind))
            })
        };
        let reject = |present: bool, name: &str| {
            if present {
                Err(Error::config(format!(
                    "[pde] `{name}` does not apply to kind {:?}; remove it",
                    self.kind
                )))
            } else {
                Ok(())
            }
        };
        match kind {
            PdeKind::Heat => {
                reject(self.velocity.is_some(), "velocity")?;
                reject(self.diff_u.is_some(), "diff_u")?;
                reject(self.diff_v.is_some(), "diff_v")?;
                reject(self.coupling.is_some(), "coupling")?;
                reject(self.reaction_strength.is_some(), "reaction_strength")?;
                PdeSpec::heat(require(self.nu, "nu")?, self.dt, self.substeps)
            }
            PdeKind::AdvectionDiffusion => {
                reject(self.diff_u.is_some(), "diff_u")?;
                reject(self.diff_v.is_some(), "diff_v")?;
                reject(self.coupling.is_some(), "coupling")?;
                reject(self.reaction_strength.is_some(), "reaction_strength")?;
                let [cx, cy] = self.velocity.ok_or_else(|| {
                    Error::config("[pde] advection-diffusion requires an explicit `velocity`")
                })?;
                PdeSpec::advection_diffusion(require(self.nu, "nu")?, cx, cy, self.dt, self.substeps)
            }
            PdeKind::ReactionDiffusion => {
                reject(self.nu.is_some(), "nu")?;
                reject(self.velocity.is_some(), "velocity")?;
                PdeSpec::reaction_diffusion(
                    require(self.diff_u, "diff_u")?,
                    require(self.diff_v, "diff_v")?,
                    require(self.coupling, "coupling")?,
                    self.reaction_strength.unwrap_or(1.0),
                    self.dt,
                    self.substeps,
                )
            }
        }
    }
}

/// Dataset generation request (`gen` subcommand).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub n_traj: usize,
    /// Saved frames per trajectory.
    pub l_total: usize,
    /// Grid resolution `[nx, ny]`; both must be even.
    pub resolution: [usize; 2],
    /// Per-dataset seed base; trajectory `i` is drawn from `seed_base + i`.
    /// Defaults to the run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_base: Option<u64>,
    /// Spectral decay exponent of the random initial conditions.
    #[serde(default = "default_decay")]
    pub decay: f64,
    /// Split label recorded in the file (`train`, `val`, `test`, ...).
    #[serde(default = "default_split")]
    pub split: String,
    /// Where to write the dataset, relative to the output directory.
    #[serde(default = "default_data_path")]
    pub path: PathBuf,
}

fn default_decay() -> f64 {
    4.0
}

fn default_split() -> String {
    "train".to_owned()
}

fn default_data_path() -> PathBuf {
    PathBuf::from("dataset.sspd")
}

/// Architecture description. The window length `t` and the retained mode
/// counts `m` define what the model physically resolves, so they are always
/// explicit; channel widths and variant switches default to the library
/// defaults. `d_u` and `n_full` may be omitted when they are implied by the
/// `[pde]` kind / `[data]` resolution or by the dataset a command operates on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Frames per window.
    pub t: usize,
    /// Retained mode counts `[m_x, m_y]`.
    pub m: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_u: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_full: Option<[usize; 2]>,
    #[serde(default = "default_c_s")]
    pub c_s: usize,
    #[serde(default = "default_c_z")]
    pub c_z: usize,
    /// Encoder downsample factor.
    #[serde(default = "default_r")]
    pub r: usize,
    #[serde(default = "default_n_sub")]
    pub n_sub: usize,
    #[serde(default = "default_d_tau")]
    pub d_tau: f64,
    /// Gate amplitude bound.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Backbone weight in the residual latent update.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Closure weight in the residual latent update.
    #[serde(default = "default_lambda_g")]
    pub lambda_g: f64,
    /// `frame-spectral`, `time-to-channel`, or `conv`.
    #[serde(default = "default_encoder")]
    pub encoder: String,
    /// `spectral` or `conv`.
    #[serde(default = "default_decoder")]
    pub decoder: String,
    /// `learned` or `identity`.
    #[serde(default = "default_backbone")]
    pub backbone: String,
    #[serde(default)]
    pub projectors_identity: bool,
    #[serde(default)]
    pub propagate_zero_fill: bool,
    #[serde(default = "default_true")]
    pub use_coords: bool,
}

fn default_c_s() -> usize {
    16
}
fn default_c_z() -> usize {
    8
}
fn default_r() -> usize {
    1
}
fn default_n_sub() -> usize {
    1
}
fn default_d_tau() -> f64 {
    1.0
}
fn default_beta() -> f64 {
    0.5
}
fn default_alpha() -> f64 {
    1.0
}
fn default_lambda_g() -> f64 {
    1.0
}
fn default_encoder() -> String {
    "frame-spectral".to_owned()
}
fn default_decoder() -> String {
    "spectral".to_owned()
}
fn default_backbone() -> String {
    "learned".to_owned()
}
fn default_true() -> bool {
    true
}

impl ModelSection {
    /// Assembles a validated [`ModelConfig`]. `d_u_hint` / `n_full_hint`
    /// fill the omittable fields (from the equation kind, the data section,
    /// or a loaded dataset); explicit values always win.
    pub fn to_model_config(
        &self,
        d_u_hint: Option<usize>,
        n_full_hint: Option<(usize, usize)>,
    ) -> Result<ModelConfig> {
        let d_u = self.d_u.or(d_u_hint).ok_or_else(|| {
            Error::config(
                "[model] d_u is not stated and no [pde] section or dataset implies it",
            )
        })?;
        let n_full = self
            .n_full
            .map(|[x, y]| (x, y))
            .or(n_full_hint)
            .ok_or_else(|| {
                Error::config(
                    "[model] n_full is not stated and no [data] section or dataset implies it",
                )
            })?;
        let config = ModelConfig {
            d_u,
            c_s: self.c_s,
            c_z: self.c_z,
            t: self.t,
            n_full,
            r: self.r,
            m: (self.m[0], self.m[1]),
            n_sub: self.n_sub,
            d_tau: self.d_tau,
            beta: self.beta,
            alpha: self.alpha,
            lambda_g: self.lambda_g,
            encoder: EncoderKind::from_tag(&self.encoder)?,
            decoder: DecoderKind::from_tag(&self.decoder)?,
            backbone: BackboneMode::from_tag(&self.backbone)?,
            projectors_identity: self.projectors_identity,
            propagate_zero_fill: self.propagate_zero_fill,
            use_coords: self.use_coords,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Optimization settings (`train` and `ablate` subcommands). The seed is not
/// a field here: training always uses the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    /// Training dataset, relative to the output directory.
    pub dataset: PathBuf,
    /// Resume from this checkpoint instead of a fresh initialization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resume: Option<PathBuf>,
    #[serde(default = "default_n_roll")]
    pub n_roll: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_lr_min")]
    pub lr_min: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps_adam")]
    pub eps_adam: f64,
    #[serde(default = "default_clip_norm")]
    pub clip_norm: f64,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
    /// Route the reconstruction loss through the projector pair instead of
    /// decoding the encoder output directly.
    #[serde(default)]
    pub rec_through_projectors: bool,
    /// Parameter-slot name prefixes excluded from optimization.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub freeze: Vec<String>,
}

fn default_n_roll() -> usize {
    2
}
fn default_batch_size() -> usize {
    4
}
fn default_epochs() -> usize {
    100
}
fn default_lr() -> f64 {
    1e-3
}
fn default_lr_min() -> f64 {
    1e-5
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps_adam() -> f64 {
    1e-8
}
fn default_clip_norm() -> f64 {
    1.0
}
fn default_checkpoint_every() -> usize {
    25
}

impl TrainSection {
    pub fn to_train_config(&self, seed: u64) -> Result<TrainConfig> {
        let config = TrainConfig {
            n_roll: self.n_roll,
            batch_size: self.batch_size,
            epochs: self.epochs,
            lr: self.lr,
            lr_min: self.lr_min,
            beta1: self.beta1,
            beta2: self.beta2,
            eps_adam: self.eps_adam,
            clip_norm: self.clip_norm,
            seed,
            checkpoint_every: self.checkpoint_every,
            rec_through_projectors: self.rec_through_projectors,
            freeze: self.freeze.clone(),
        };
        config.validate()?;
        Ok(config)
    }
}

/// Loss term weights; defaults match the library defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    #[serde(default = "default_w_rec")]
    pub rec: f64,
    #[serde(default = "default_w_lat")]
    pub lat: f64,
    #[serde(default = "default_w_phy")]
    pub phy: f64,
    #[serde(default = "default_w_norm")]
    pub norm: f64,
    #[serde(default = "default_w_orth")]
    pub orth: f64,
}

fn default_w_rec() -> f64 {
    1.0
}
fn default_w_lat() -> f64 {
    1.0
}
fn default_w_phy() -> f64 {
    1.0
}
fn default_w_norm() -> f64 {
    0.01
}
fn default_w_orth() -> f64 {
    0.01
}

impl Default for LossSection {
    fn default() -> Self {
        LossSection {
            rec: default_w_rec(),
            lat: default_w_lat(),
            phy: default_w_phy(),
            norm: default_w_norm(),
            orth: default_w_orth(),
        }
    }
}

impl LossSection {
    pub fn to_weights(&self) -> Result<LossWeights> {
        let weights = LossWeights {
            rec: self.rec,
            lat: self.lat,
            phy: self.phy,
            norm: self.norm,
            orth: self.orth,
        };
        weights.validate()?;
        Ok(weights)
    }
}

/// Rollout evaluation request (`eval` subcommand).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Evaluation dataset, relative to the output directory.
    pub dataset: PathBuf,
    /// Checkpoint to evaluate; required unless `oracle` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// Ground-truth frames handed to the model before the first prediction;
    /// must be a positive multiple of the window length.
    pub conditioning: usize,
    /// Predicted frames to roll out (the report carries one row per frame).
    pub horizon: usize,
    /// Leading predicted frames treated as supervised: scoring starts after
    /// them, restricting the report to the extrapolation window. 0 scores
    /// the whole rollout.
    #[serde(default)]
    pub supervised_horizon: usize,
    /// Also emit per-step error curves as an SVG next to the CSV.
    #[serde(default)]
    pub plot: bool,
    /// Evaluate the ground-truth stub instead of a checkpoint (pipeline
    /// check: every metric must come out zero).
    #[serde(default)]
    pub oracle: bool,
}

/// Gradient verification request (`gradcheck` subcommand). Probes are spread
/// across parameter slots so every operation is covered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckSection {
    /// Number of probed parameter coordinates.
    #[serde(default = "default_gc_count")]
    pub count: usize,
    /// Central-difference step.
    #[serde(default = "default_gc_eps")]
    pub eps: f64,
    /// Maximum accepted relative error.
    #[serde(default = "default_gc_tol")]
    pub tol: f64,
    /// Rollout depth of the probed objective.
    #[serde(default = "default_n_roll")]
    pub n_roll: usize,
    /// Probe against the first window of this dataset; a synthetic random
    /// window is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    /// Test hook: corrupt one adjoint entry so the check must fail.
    #[serde(default)]
    pub inject_fault: bool,
}

fn default_gc_count() -> usize {
    200
}
fn default_gc_eps() -> f64 {
    1e-5
}
fn default_gc_tol() -> f64 {
    1e-4
}

impl Default for GradcheckSection {
    fn default() -> Self {
        GradcheckSection {
            count: default_gc_count(),
            eps: default_gc_eps(),
            tol: default_gc_tol(),
            n_roll: default_n_roll(),
            dataset: None,
            inject_fault: false,
        }
    }
}

/// Ablation sweep request (`ablate` subcommand). Optimization settings come
/// from `[train]` (its dataset path is ignored in favor of the ones here).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblateSection {
    pub train_dataset: PathBuf,
    pub eval_dataset: PathBuf,
    /// How the backbone-less variant is realized: `zero-increment` (identity
    /// backbone) or `frozen-identity-gates` (pinned temporal matrices).
    #[serde(default = "default_backbone_style")]
    pub backbone_style: String,
    pub conditioning: usize,
    pub horizon: usize,
}

fn default_backbone_style() -> String {
    "zero-increment".to_owned()
}

impl RunConfig {
    /// Parses and cross-validates a config file. Every section present is
    /// checked immediately — a broken `[train]` section fails `gen` too, so
    /// a config that loads once is good for the whole pipeline.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("cannot read config {}: {e}", path.display()),
            ))
        })?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Re-checks every cross-field constraint; called after load and after
    /// command-line overrides.
    pub fn validate(&self) -> Result<()> {
        if let Some(pde) = &self.pde {
            pde.to_spec()?;
        }
        if let Some(data) = &self.data {
            if data.n_traj == 0 || data.l_total == 0 {
                return Err(Error::config("[data] n_traj and l_total must be nonzero"));
            }
        }
        if let Some(model) = &self.model {
            // Validate with whatever the config itself implies; commands
            // re-assemble with dataset-derived hints, and `Model::new`
            // validates again.
            let d_u_hint = self.pde.as_ref().and_then(|p| {
                PdeKind::from_tag(&p.kind).ok().map(|k| k.channels())
            });
            let n_full_hint = self.data.as_ref().map(|d| (d.resolution[0], d.resolution[1]));
            if (model.d_u.is_some() || d_u_hint.is_some())
                && (model.n_full.is_some() || n_full_hint.is_some())
            {
                model.to_model_config(d_u_hint, n_full_hint)?;
            }
        }
        if let Some(train) = &self.train {
            train.to_train_config(self.seed)?;
        }
        if let Some(loss) = &self.loss {
            loss.to_weights()?;
        }
        if let Some(eval) = &self.eval {
            if eval.horizon == 0 {
                return Err(Error::config("[eval] horizon must be at least 1"));
            }
            if eval.supervised_horizon >= eval.horizon {
                return Err(Error::config(format!(
                    "[eval] supervised_horizon {} leaves no scored steps before horizon {}",
                    eval.supervised_horizon, eval.horizon
                )));
            }
            if eval.checkpoint.is_none() && !eval.oracle {
                return Err(Error::config(
                    "[eval] needs a checkpoint (or `oracle = true` for the ground-truth stub)",
                ));
            }
        }
        if let Some(gc) = &self.gradcheck {
            if gc.count == 0 || gc.n_roll == 0 {
                return Err(Error::config("[gradcheck] count and n_roll must be nonzero"));
            }
        }
        if let Some(ab) = &self.ablate {
            if ab.horizon == 0 {
                return Err(Error::config("[ablate] horizon must be at least 1"));
            }
            parse_backbone_style(&ab.backbone_style)?;
        }
        Ok(())
    }

    /// Resolves a config-relative path against the output directory.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.out.join(path)
        }
    }

    /// Serializes the effective configuration; reparsing the result yields
    /// an identical `RunConfig`.
    pub fn echo(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::config(format!("cannot serialize effective config: {e}")))
    }

    /// The loss weights, defaulted when the section is absent.
    pub fn weights(&self) -> Result<LossWeights> {
        self.loss.clone().unwrap_or_default().to_weights()
    }

    /// A section, or a config error naming it.
    pub fn need_pde(&self) -> Result<&PdeSection> {
        self.pde.as_ref().ok_or_else(|| Error::config("this command needs a [pde] section"))
    }

    pub fn need_data(&self) -> Result<&DataSection> {
        self.data.as_ref().ok_or_else(|| Error::config("this command needs a [data] section"))
    }

    pub fn need_model(&self) -> Result<&ModelSection> {
        self.model.as_ref().ok_or_else(|| Error::config("this command needs a [model] section"))
    }

    pub fn need_train(&self) -> Result<&TrainSection> {
        self.train.as_ref().ok_or_else(|| Error::config("this command needs a [train] section"))
    }

    pub fn need_eval(&self) -> Result<&EvalSection> {
        self.eval.as_ref().ok_or_else(|| Error::config("this command needs an [eval] section"))
    }

    pub fn need_ablate(&self) -> Result<&AblateSection> {
        self.ablate.as_ref().ok_or_else(|| Error::config("this command needs an [ablate] section"))
    }
}

/// Maps the ablation style tag onto the library enum.
pub fn parse_backbone_style(tag: &str) -> Result<ssp_eval::BackboneAblation> {
    match tag {
        "zero-increment" => Ok(ssp_eval::BackboneAblation::ZeroIncrement),
        "frozen-identity-gates" => Ok(ssp_eval::BackboneAblation::FrozenIdentityGates),
        other => Err(Error::config(format!(
            "unknown backbone_style {other:?}; expected zero-increment or frozen-identity-gates"
        ))),
    }
}
