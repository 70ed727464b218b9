//! Training hyperparameters and loss weights.

use ssp_core::{Error, Result};

/// Weights of the five loss terms. The rollout terms (latent and physical)
/// are averaged over rollout steps before weighting.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    pub rec: f64,
    pub lat: f64,
    pub phy: f64,
    pub norm: f64,
    pub orth: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { rec: 1.0, lat: 1.0, phy: 1.0, norm: 0.01, orth: 0.01 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rec", self.rec),
            ("lat", self.lat),
            ("phy", self.phy),
            ("norm", self.norm),
            ("orth", self.orth),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!(
                    "loss weight {name} = {v} must be finite and nonnegative"
                )));
            }
        }
        Ok(())
    }
}

/// Optimizer and rollout settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Rollout steps per window; each step advances one full window of `t`
    /// frames, so a training window holds `(n_roll + 1) · t` frames.
    pub n_roll: usize,
    pub batch_size: usize,
    pub epochs: usize,
    /// Peak learning rate; the schedule cosine-decays to `lr_min`.
    pub lr: f64,
    pub lr_min: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    /// Global gradient-norm clip applied before every update.
    pub clip_norm: f64,
    pub seed: u64,
    /// Write a checkpoint every this many epochs (and always at the end).
    pub checkpoint_every: usize,
    /// Route the reconstruction loss through the projector pair
    /// (`decode(lift(project(encode(u))))`) instead of the plain
    /// decode-of-encode form.
    pub rec_through_projectors: bool,
    /// Parameter-slot name prefixes excluded from optimization: their
    /// gradients are zeroed before every update, so the slots keep their
    /// initial values exactly. Example: `["prop.kbar"]` pins the temporal
    /// matrices, `["dec."]` pins the whole decoder.
    pub freeze: Vec<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_roll: 2,
            batch_size: 4,
            epochs: 100,
            lr: 1e-3,
            lr_min: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            clip_norm: 1.0,
            seed: 0,
            checkpoint_every: 25,
            rec_through_projectors: false,
            freeze: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_roll == 0 {
            return Err(Error::config("n_roll must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epoch count must be at least 1"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::config(format!("learning rate {} must be positive", self.lr)));
        }
        if !(self.lr_min >= 0.0) || self.lr_min > self.lr {
            return Err(Error::config(format!(
                "learning-rate floor {} must lie in [0, {}]",
                self.lr_min, self.lr
            )));
        }
        for (name, v, lo, hi) in [
            ("beta1", self.beta1, 0.0, 1.0),
            ("beta2", self.beta2, 0.0, 1.0),
        ] {
            if !(v >= lo) || v >= hi {
                return Err(Error::config(format!(
                    "Adam moment decay {name} = {v} must lie in [{lo}, {hi})"
                )));
            }
        }
        if !(self.eps_adam > 0.0) {
            return Err(Error::config("Adam epsilon must be positive"));
        }
        if !(self.clip_norm > 0.0) || !self.clip_norm.is_finite() {
            return Err(Error::config(format!(
                "gradient clip norm {} must be positive and finite",
                self.clip_norm
            )));
        }
        Ok(())
    }

    /// Frames one training window must hold.
    pub fn window_frames(&self, t: usize) -> usize {
        (self.n_roll + 1) * t
    }
}

/// Cosine decay from `lr` to `lr_min` across `total` epochs (constant when
/// there is a single epoch).
pub fn cosine_lr(config: &TrainConfig, epoch: usize) -> f64 {
    if config.epochs <= 1 {
        return config.lr;
    }
    let progress = epoch.min(config.epochs - 1) as f64 / (config.epochs - 1) as f64;
    config.lr_min + 0.5 * (config.lr - config.lr_min) * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_pass_validation() {
        TrainConfig::default().validate().unwrap();
        LossWeights::default().validate().unwrap();
        let w = LossWeights::default();
        assert_eq!((w.rec, w.lat, w.phy), (1.0, 1.0, 1.0));
        assert_eq!((w.norm, w.orth), (0.01, 0.01));
    }

    #[test]
    fn schedule_spans_peak_to_floor() {
        let config = TrainConfig { epochs: 11, ..TrainConfig::default() };
        assert!((cosine_lr(&config, 0) - config.lr).abs() < 1e-15, "first epoch runs at peak");
        assert!(
            (cosine_lr(&config, 10) - config.lr_min).abs() < 1e-15,
            "last epoch runs at the floor"
        );
        let mid = cosine_lr(&config, 5);
        assert!(
            mid < config.lr && mid > config.lr_min,
            "midpoint must sit strictly between the extremes"
        );
        for e in 1..11 {
            assert!(
                cosine_lr(&config, e) <= cosine_lr(&config, e - 1),
                "cosine decay must be monotone"
            );
        }
    }

    #[test]
    fn bad_settings_are_rejected() {
        for bad in [
            TrainConfig { n_roll: 0, ..TrainConfig::default() },
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
            TrainConfig { lr: 0.0, ..TrainConfig::default() },
            TrainConfig { lr_min: 1.0, ..TrainConfig::default() },
            TrainConfig { beta1: 1.0, ..TrainConfig::default() },
            TrainConfig { clip_norm: 0.0, ..TrainConfig::default() },
        ] {
            assert!(bad.validate().is_err(), "invalid settings must be rejected: {bad:?}");
        }
        let bad = LossWeights { rec: -1.0, ..LossWeights::default() };
        assert!(bad.validate().is_err(), "negative weights must be rejected");
    }
}
