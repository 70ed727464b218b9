//! Model hyperparameters, architecture variant switches, and their
//! consistency rules.

use ssp_core::{validate_resolution, Error, Result};

/// How input history enters the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    /// Default: each frame is encoded independently through the spectral
    /// encoder (coordinate concat → lift conv → factorized spectral blocks →
    /// channel attention).
    FrameSpectral,
    /// Ablation: the whole history is stacked into channels and lifted in one
    /// shot, then unstacked into frames before the spectral blocks.
    TimeToChannel,
    /// Ablation: the factorized spectral blocks are replaced by local
    /// convolutional residual blocks.
    Conv,
}

impl EncoderKind {
    pub fn tag(&self) -> &'static str {
        match self {
            EncoderKind::FrameSpectral => "frame-spectral",
            EncoderKind::TimeToChannel => "time-to-channel",
            EncoderKind::Conv => "conv",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "frame-spectral" => Ok(EncoderKind::FrameSpectral),
            "time-to-channel" => Ok(EncoderKind::TimeToChannel),
            "conv" => Ok(EncoderKind::Conv),
            other => Err(Error::config(format!("unknown encoder kind {other:?}"))),
        }
    }
}

/// Which branch pair the decoder uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderKind {
    /// Default: factorized spectral branch + local convolutional branch.
    Spectral,
    /// Ablation: both branches are local convolutions.
    Conv,
}

impl DecoderKind {
    pub fn tag(&self) -> &'static str {
        match self {
            DecoderKind::Spectral => "spectral",
            DecoderKind::Conv => "conv",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "spectral" => Ok(DecoderKind::Spectral),
            "conv" => Ok(DecoderKind::Conv),
            other => Err(Error::config(format!("unknown decoder kind {other:?}"))),
        }
    }
}

/// Whether the linear backbone participates in the latent update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackboneMode {
    /// Default: gated per-channel temporal matrices, learned.
    Learned,
    /// Ablation: the backbone is the identity map, so its residual increment
    /// vanishes and only the closure drives the latent update.
    Identity,
}

impl BackboneMode {
    pub fn tag(&self) -> &'static str {
        match self {
            BackboneMode::Learned => "learned",
            BackboneMode::Identity => "identity",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "learned" => Ok(BackboneMode::Learned),
            "identity" => Ok(BackboneMode::Identity),
            other => Err(Error::config(format!("unknown backbone mode {other:?}"))),
        }
    }
}

/// Hidden width of the frequency gate MLP.
pub const GATE_HIDDEN: usize = 64;

/// Complete architectural description of the propagation model. Everything a
/// checkpoint needs to rebuild the parameter layout lives here.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Physical channels of the PDE state.
    pub d_u: usize,
    /// Spatial-representation channels.
    pub c_s: usize,
    /// Compact propagation channels (strictly fewer than `c_s` unless the
    /// projector pair is the identity).
    pub c_z: usize,
    /// Frames per sequence.
    pub t: usize,
    /// Physical resolution.
    pub n_full: (usize, usize),
    /// Encoder downsample factor; latent resolution is `n_full / r`.
    pub r: usize,
    /// Retained mode counts (m_x, m_y).
    pub m: (usize, usize),
    /// Latent substep count and step size.
    pub n_sub: usize,
    pub d_tau: f64,
    /// Gate amplitude: gates live in [1−β, 1+β].
    pub beta: f64,
    /// Backbone and closure weights in the residual update.
    pub alpha: f64,
    pub lambda_g: f64,
    /// Architecture variant switches.
    pub encoder: EncoderKind,
    pub decoder: DecoderKind,
    pub backbone: BackboneMode,
    /// Replace the projector pair with the identity (requires c_z == c_s).
    pub projectors_identity: bool,
    /// Zero non-retained modes inside the propagator instead of passing them
    /// through unchanged.
    pub propagate_zero_fill: bool,
    /// Concatenate the normalized coordinate grid before the lift. Disabled
    /// only by tests that need exact translation equivariance.
    pub use_coords: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_u: 1,
            c_s: 16,
            c_z: 8,
            t: 5,
            n_full: (32, 32),
            r: 1,
            m: (8, 8),
            n_sub: 1,
            d_tau: 1.0,
            beta: 0.5,
            alpha: 1.0,
            lambda_g: 1.0,
            encoder: EncoderKind::FrameSpectral,
            decoder: DecoderKind::Spectral,
            backbone: BackboneMode::Learned,
            projectors_identity: false,
            propagate_zero_fill: false,
            use_coords: true,
        }
    }
}

impl ModelConfig {
    /// Latent spatial resolution after the strided lift.
    pub fn latent_resolution(&self) -> (usize, usize) {
        (self.n_full.0 / self.r, self.n_full.1 / self.r)
    }

    /// Mode counts of the encoder/decoder axis mixers: half the latent extent
    /// per axis, dropping only the Nyquist coefficient.
    pub fn mixer_modes(&self) -> (usize, usize) {
        let (nx, ny) = self.latent_resolution();
        (nx / 2, ny / 2)
    }

    /// Hidden width of the channel-attention MLP (reduction 4, at least 1).
    pub fn attn_hidden(&self) -> usize {
        (self.c_s / 4).max(1)
    }

    /// Channel counts of the closure network: re/im split stacks time and
    /// channel, width doubles in the hidden layer.
    pub fn closure_channels(&self) -> (usize, usize) {
        let base = 2 * self.t * self.c_z;
        (base, 2 * base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_u == 0 || self.c_s == 0 || self.c_z == 0 || self.t == 0 {
            return Err(Error::config(
                "channel counts and sequence length must all be nonzero",
            ));
        }
        if self.projectors_identity {
            if self.c_z != self.c_s {
                return Err(Error::config(format!(
                    "identity projectors require c_z == c_s, got c_z = {} and c_s = {}",
                    self.c_z, self.c_s
                )));
            }
        } else if self.c_z >= self.c_s {
            return Err(Error::config(format!(
                "compact channels c_z = {} must be fewer than representation channels c_s = {}",
                self.c_z, self.c_s
            )));
        }
        if self.r == 0 {
            return Err(Error::config("downsample factor r must be at least 1"));
        }
        if self.n_full.0 % self.r != 0 || self.n_full.1 % self.r != 0 {
            return Err(Error::config(format!(
                "downsample factor {} must divide the physical resolution {}x{}",
                self.r, self.n_full.0, self.n_full.1
            )));
        }
        validate_resolution(self.n_full.0, self.n_full.1)?;
        let (nx, ny) = self.latent_resolution();
        validate_resolution(nx, ny)?;
        if self.m.0 == 0 || self.m.0 > nx {
            return Err(Error::config(format!(
                "retained x-modes m_x = {} outside 1..={nx}",
                self.m.0
            )));
        }
        if self.m.1 == 0 || self.m.1 > ny / 2 + 1 {
            return Err(Error::config(format!(
                "retained y-modes m_y = {} outside 1..={}",
                self.m.1,
                ny / 2 + 1
            )));
        }
        if self.n_sub == 0 {
            return Err(Error::config("substep count must be at least 1"));
        }
        if !(self.d_tau > 0.0) || !self.d_tau.is_finite() {
            return Err(Error::config(format!(
                "substep size {} must be positive and finite",
                self.d_tau
            )));
        }
        if self.beta < 0.0 || !self.beta.is_finite() {
            return Err(Error::config(format!("gate amplitude beta = {} must be >= 0", self.beta)));
        }
        if !self.alpha.is_finite() || !self.lambda_g.is_finite() {
            return Err(Error::config("alpha and lambda_g must be finite"));
        }
        Ok(())
    }

    /// Serializes to the key=value text stored in checkpoints.
    pub fn to_metadata(&self) -> String {
        format!(
            "d_u={}\nc_s={}\nc_z={}\nt={}\nn_x={}\nn_y={}\nr={}\nm_x={}\nm_y={}\n\
             n_sub={}\nd_tau={}\nbeta={}\nalpha={}\nlambda_g={}\nencoder={}\ndecoder={}\n\
             backbone={}\nprojectors_identity={}\npropagate_zero_fill={}\nuse_coords={}\n",
            self.d_u,
            self.c_s,
            self.c_z,
            self.t,
            self.n_full.0,
            self.n_full.1,
            self.r,
            self.m.0,
            self.m.1,
            self.n_sub,
            self.d_tau,
            self.beta,
            self.alpha,
            self.lambda_g,
            self.encoder.tag(),
            self.decoder.tag(),
            self.backbone.tag(),
            self.projectors_identity,
            self.propagate_zero_fill,
            self.use_coords,
        )
    }

    /// Parses the key=value form written by [`ModelConfig::to_metadata`].
    pub fn from_metadata(text: &str) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for line in text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                map.insert(k.trim(), v.trim());
            }
        }
        fn get<'a>(map: &std::collections::BTreeMap<&'a str, &'a str>, key: &str) -> Result<&'a str> {
            map.get(key)
                .copied()
                .ok_or_else(|| Error::format(format!("model metadata missing key {key:?}")))
        }
        fn num<T: std::str::FromStr>(
            map: &std::collections::BTreeMap<&str, &str>,
            key: &str,
        ) -> Result<T> {
            get(map, key)?.parse().map_err(|_| {
                Error::format(format!("model metadata key {key:?} has an unparsable value"))
            })
        }
        let config = ModelConfig {
            d_u: num(&map, "d_u")?,
            c_s: num(&map, "c_s")?,
            c_z: num(&map, "c_z")?,
            t: num(&map, "t")?,
            n_full: (num(&map, "n_x")?, num(&map, "n_y")?),
            r: num(&map, "r")?,
            m: (num(&map, "m_x")?, num(&map, "m_y")?),
            n_sub: num(&map, "n_sub")?,
            d_tau: num(&map, "d_tau")?,
            beta: num(&map, "beta")?,
            alpha: num(&map, "alpha")?,
            lambda_g: num(&map, "lambda_g")?,
            encoder: EncoderKind::from_tag(get(&map, "encoder")?)?,
            decoder: DecoderKind::from_tag(get(&map, "decoder")?)?,
            backbone: BackboneMode::from_tag(get(&map, "backbone")?)?,
            projectors_identity: num(&map, "projectors_identity")?,
            propagate_zero_fill: num(&map, "propagate_zero_fill")?,
            use_coords: num(&map, "use_coords")?,
        };
        config.validate()?;
        Ok(config)
    }
}
