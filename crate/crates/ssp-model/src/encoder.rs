//! The encoder: physical frames to feature frames.
//!
//! The default flavor works frame by frame: each state is concatenated with a
//! normalized coordinate grid, lifted to `c_s` channels by a strided circular
//! 3×3 convolution (stride `r` also reduces the resolution), refined by two
//! residual spectral blocks, and reweighted by channel attention. The
//! time-to-channel flavor instead stacks the whole history into the channel
//! axis and encodes it as a single frame whose lift emits `t·c_s` channels,
//! which are then split back into frames. The convolutional flavor swaps the
//! spectral blocks for local residual convolutions.

use ndarray::Array4;
use ssp_core::{AxisFft, Error, GridField, Result};

use crate::config::{EncoderKind, ModelConfig};
use crate::layers::{
    block_backward, block_forward, channel_attention_backward, channel_attention_forward,
    AttnCache, BlockCache,
};
use crate::ops::{conv2d, conv2d_backward};
use crate::params::ParamSet;

/// Saved activations of one encoder application.
#[derive(Debug, Clone)]
pub struct EncodeCache {
    /// Lift-convolution input: frames (or the stacked frame) with coordinate
    /// channels appended.
    pub lift_in: Array4<f64>,
    /// Features entering each residual block.
    pub block_in: [Array4<f64>; 2],
    pub blocks: [BlockCache; 2],
    /// Features entering the attention stage.
    pub attn_in: Array4<f64>,
    pub attn: AttnCache,
}

fn check_input(config: &ModelConfig, u: &GridField) -> Result<()> {
    let (nx, ny) = config.n_full;
    if u.batch() != config.t || u.channels() != config.d_u || u.nx() != nx || u.ny() != ny {
        return Err(Error::config(format!(
            "encoder input is {}x{}x{}x{}, expected {}x{}x{nx}x{ny}",
            u.batch(),
            u.channels(),
            u.nx(),
            u.ny(),
            config.t,
            config.d_u
        )));
    }
    Ok(())
}

/// Builds the lift-convolution input: frames stacked into channels for the
/// time-to-channel flavor, plus coordinate planes when configured.
fn assemble_lift_input(config: &ModelConfig, u: &GridField) -> Array4<f64> {
    let (nx, ny) = config.n_full;
    let (t, d_u) = (config.t, config.d_u);
    let coords = if config.use_coords { 2 } else { 0 };
    let (frames, base) = match config.encoder {
        EncoderKind::TimeToChannel => (1, t * d_u),
        _ => (t, d_u),
    };
    let mut input = Array4::<f64>::zeros((frames, base + coords, nx, ny));
    for ti in 0..t {
        for c in 0..d_u {
            let (bi, ch) = match config.encoder {
                EncoderKind::TimeToChannel => (0, ti * d_u + c),
                _ => (ti, c),
            };
            for i in 0..nx {
                for j in 0..ny {
                    input[(bi, ch, i, j)] = u.data()[(ti, c, i, j)];
                }
            }
        }
    }
    if config.use_coords {
        for bi in 0..frames {
            for i in 0..nx {
                for j in 0..ny {
                    input[(bi, base, i, j)] = i as f64 / nx as f64;
                    input[(bi, base + 1, i, j)] = j as f64 / ny as f64;
                }
            }
        }
    }
    input
}

/// Encodes a window of physical frames into feature frames at the latent
/// resolution. The axis transforms must match that resolution.
pub fn encode(
    fx: &AxisFft,
    fy: &AxisFft,
    config: &ModelConfig,
    params: &ParamSet,
    u: &GridField,
) -> Result<(GridField, EncodeCache)> {
    check_input(config, u)?;
    let (nx, ny) = config.latent_resolution();
    let lift_in = assemble_lift_input(config, u);
    let lifted = conv2d(&lift_in, &params.enc_lift.w, &params.enc_lift.b, config.r)?;
    let features = if config.encoder == EncoderKind::TimeToChannel {
        // (1, t·c_s, nx, ny) → (t, c_s, nx, ny): the channel axis is
        // frame-major, so this is a pure reshape.
        lifted
            .into_shape_with_order((config.t, config.c_s, nx, ny))
            .map_err(|e| Error::config(format!("stacked lift output could not split: {e}")))?
    } else {
        lifted
    };
    let (b0_out, c0) = block_forward(fx, fy, &features, &params.enc_blocks[0])?;
    let (b1_out, c1) = block_forward(fx, fy, &b0_out, &params.enc_blocks[1])?;
    let (gated, attn) = channel_attention_forward(&b1_out, &params.enc_attn)?;
    Ok((
        GridField::new(gated)?,
        EncodeCache {
            lift_in,
            block_in: [features, b0_out],
            blocks: [c0, c1],
            attn_in: b1_out,
            attn,
        },
    ))
}

/// Backward of [`encode`]: accumulates parameter gradients and returns the
/// cotangent of the physical window.
pub fn encode_backward(
    fx: &AxisFft,
    fy: &AxisFft,
    config: &ModelConfig,
    params: &ParamSet,
    cache: &EncodeCache,
    gh: &GridField,
    grads: &mut ParamSet,
) -> Result<GridField> {
    let (nx, ny) = config.latent_resolution();
    let g_attn_in = channel_attention_backward(
        &cache.attn_in,
        &params.enc_attn,
        &cache.attn,
        gh.data(),
        &mut grads.enc_attn,
    )?;
    let g_b1_in = block_backward(
        fx,
        fy,
        &cache.block_in[1],
        &params.enc_blocks[1],
        &cache.blocks[1],
        &g_attn_in,
        &mut grads.enc_blocks[1],
    )?;
    let g_features = block_backward(
        fx,
        fy,
        &cache.block_in[0],
        &params.enc_blocks[0],
        &cache.blocks[0],
        &g_b1_in,
        &mut grads.enc_blocks[0],
    )?;
    let g_lifted = if config.encoder == EncoderKind::TimeToChannel {
        g_features
            .into_shape_with_order((1, config.t * config.c_s, nx, ny))
            .map_err(|e| Error::config(format!("feature cotangent could not restack: {e}")))?
    } else {
        g_features
    };
    let g_lift_in = conv2d_backward(
        &cache.lift_in,
        &params.enc_lift.w,
        config.r,
        &g_lifted,
        &mut grads.enc_lift.w,
        &mut grads.enc_lift.b,
    )?;
    // Strip coordinate channels and unstack frames.
    let (fx_n, fy_n) = config.n_full;
    let (t, d_u) = (config.t, config.d_u);
    let mut gu = Array4::<f64>::zeros((t, d_u, fx_n, fy_n));
    for ti in 0..t {
        for c in 0..d_u {
            let (bi, ch) = match config.encoder {
                EncoderKind::TimeToChannel => (0, ti * d_u + c),
                _ => (ti, c),
            };
            for i in 0..fx_n {
                for j in 0..fy_n {
                    gu[(ti, c, i, j)] = g_lift_in[(bi, ch, i, j)];
                }
            }
        }
    }
    GridField::new(gu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;
    use crate::testutil::{projection, FnOp};
    use ndarray::Array4;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use ssp_core::{grad_check, SpatialAxis};

    fn ctx(config: &ModelConfig) -> (AxisFft, AxisFft) {
        let (nx, ny) = config.latent_resolution();
        (
            AxisFft::new(SpatialAxis::X, nx).unwrap(),
            AxisFft::new(SpatialAxis::Y, ny).unwrap(),
        )
    }

    fn small_config(kind: EncoderKind) -> ModelConfig {
        ModelConfig {
            d_u: 2,
            c_s: 4,
            c_z: 3,
            t: 3,
            n_full: (8, 8),
            r: 1,
            m: (4, 3),
            encoder: kind,
            ..ModelConfig::default()
        }
    }

    fn random_field(rng: &mut ChaCha8Rng, dim: (usize, usize, usize, usize)) -> GridField {
        GridField::new(Array4::from_shape_fn(dim, |_| rng.random_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn output_shape_follows_the_configuration() {
        for kind in [EncoderKind::FrameSpectral, EncoderKind::TimeToChannel, EncoderKind::Conv] {
            let mut config = small_config(kind);
            config.n_full = (8, 8);
            config.r = 2;
            let params = ParamSet::init(&config, 30).unwrap();
            let (fx, fy) = ctx(&config);
            let mut rng = ChaCha8Rng::seed_from_u64(31);
            let u = random_field(&mut rng, (3, 2, 8, 8));
            let (h, _) = encode(&fx, &fy, &config, &params, &u).unwrap();
            assert_eq!(
                (h.batch(), h.channels(), h.nx(), h.ny()),
                (3, 4, 4, 4),
                "encoder output shape for {kind:?} with stride 2"
            );
        }
    }

    #[test]
    fn frame_permutation_commutes_for_frame_wise_flavors() {
        for kind in [EncoderKind::FrameSpectral, EncoderKind::Conv] {
            let config = small_config(kind);
            let params = ParamSet::init(&config, 32).unwrap();
            let (fx, fy) = ctx(&config);
            let mut rng = ChaCha8Rng::seed_from_u64(33);
            let u = random_field(&mut rng, (3, 2, 8, 8));
            let perm = [2usize, 0, 1];
            let permuted = GridField::new(Array4::from_shape_fn(
                (3, 2, 8, 8),
                |(ti, c, i, j)| u.data()[(perm[ti], c, i, j)],
            ))
            .unwrap();
            let (h, _) = encode(&fx, &fy, &config, &params, &u).unwrap();
            let (hp, _) = encode(&fx, &fy, &config, &params, &permuted).unwrap();
            for ti in 0..3 {
                let a = h.data().slice(ndarray::s![perm[ti], .., .., ..]);
                let b = hp.data().slice(ndarray::s![ti, .., .., ..]);
                let gap = (&a.to_owned() - &b.to_owned())
                    .iter()
                    .map(|v| v.abs())
                    .fold(0.0, f64::max);
                assert!(
                    gap == 0.0,
                    "{kind:?} encoder must commute with frame permutations, frame {ti} gap {gap}"
                );
            }
        }
    }

    #[test]
    fn frames_do_not_leak_into_each_other() {
        let config = small_config(EncoderKind::FrameSpectral);
        let params = ParamSet::init(&config, 34).unwrap();
        let (fx, fy) = ctx(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let u = random_field(&mut rng, (3, 2, 8, 8));
        let mut other = u.clone();
        for c in 0..2 {
            for i in 0..8 {
                for j in 0..8 {
                    other.data_mut()[(0, c, i, j)] += rng.random_range(0.5..1.0);
                    other.data_mut()[(2, c, i, j)] -= rng.random_range(0.5..1.0);
                }
            }
        }
        let (h, _) = encode(&fx, &fy, &config, &params, &u).unwrap();
        let (ho, _) = encode(&fx, &fy, &config, &params, &other).unwrap();
        let diff_frame = |ti: usize| {
            (&h.data().slice(ndarray::s![ti, .., .., ..]).to_owned()
                - &ho.data().slice(ndarray::s![ti, .., .., ..]).to_owned())
                .iter()
                .map(|v| v.abs())
                .fold(0.0, f64::max)
        };
        assert!(diff_frame(1) == 0.0, "untouched frame must encode identically");
        assert!(diff_frame(0) > 0.0 && diff_frame(2) > 0.0, "modified frames must differ");
    }

    #[test]
    fn stacked_history_mixes_frames() {
        let config = small_config(EncoderKind::TimeToChannel);
        let params = ParamSet::init(&config, 36).unwrap();
        let (fx, fy) = ctx(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let u = random_field(&mut rng, (3, 2, 8, 8));
        let mut other = u.clone();
        for c in 0..2 {
            for i in 0..8 {
                for j in 0..8 {
                    other.data_mut()[(0, c, i, j)] += rng.random_range(0.5..1.0);
                }
            }
        }
        let (h, _) = encode(&fx, &fy, &config, &params, &u).unwrap();
        let (ho, _) = encode(&fx, &fy, &config, &params, &other).unwrap();
        // Perturbing frame 0 must reach the other output frames through the
        // stacked channels.
        let gap = (&h.data().slice(ndarray::s![2, .., .., ..]).to_owned()
            - &ho.data().slice(ndarray::s![2, .., .., ..]).to_owned())
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        assert!(gap > 0.0, "time-to-channel encoding must mix history into every frame");
    }

    #[test]
    fn translation_equivariant_without_coordinate_channels() {
        for kind in [EncoderKind::FrameSpectral, EncoderKind::Conv] {
            let mut config = small_config(kind);
            config.use_coords = false;
            let params = ParamSet::init(&config, 38).unwrap();
            let (fx, fy) = ctx(&config);
            let mut rng = ChaCha8Rng::seed_from_u64(39);
            let u = random_field(&mut rng, (3, 2, 8, 8));
            let (sx, sy) = (3usize, 5usize);
            let shifted = GridField::new(Array4::from_shape_fn(
                (3, 2, 8, 8),
                |(ti, c, i, j)| u.data()[(ti, c, (i + 8 - sx) % 8, (j + 8 - sy) % 8)],
            ))
            .unwrap();
            let (h, _) = encode(&fx, &fy, &config, &params, &u).unwrap();
            let (hs, _) = encode(&fx, &fy, &config, &params, &shifted).unwrap();
            let mut gap: f64 = 0.0;
            for ti in 0..3 {
                for c in 0..4 {
                    for i in 0..8 {
                        for j in 0..8 {
                            let expect = h.data()[(ti, c, (i + 8 - sx) % 8, (j + 8 - sy) % 8)];
                            gap = gap.max((hs.data()[(ti, c, i, j)] - expect).abs());
                        }
                    }
                }
            }
            assert!(
                gap < 1e-8,
                "{kind:?} encoder must commute with grid shifts when coordinates are off, gap {gap}"
            );
        }
    }

    #[test]
    fn coordinate_channels_break_translation_equivariance() {
        let config = small_config(EncoderKind::FrameSpectral);
        assert!(config.use_coords, "default configuration carries coordinates");
        let params = ParamSet::init(&config, 40).unwrap();
        let (fx, fy) = ctx(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let u = random_field(&mut rng, (3, 2, 8, 8));
        let shifted = GridField::new(Array4::from_shape_fn(
            (3, 2, 8, 8),
            |(ti, c, i, j)| u.data()[(ti, c, (i + 7) % 8, j)],
        ))
        .unwrap();
        let (h, _) = encode(&fx, &fy, &config, &params, &u).unwrap();
        let (hs, _) = encode(&fx, &fy, &config, &params, &shifted).unwrap();
        let mut gap: f64 = 0.0;
        for ti in 0..3 {
            for c in 0..4 {
                for i in 0..8 {
                    for j in 0..8 {
                        let expect = h.data()[(ti, c, (i + 7) % 8, j)];
                        gap = gap.max((hs.data()[(ti, c, i, j)] - expect).abs());
                    }
                }
            }
        }
        assert!(
            gap > 1e-6,
            "coordinate channels must make the encoder position-aware, gap {gap}"
        );
    }

    #[test]
    fn encode_gradients_match_finite_differences() {
        for kind in [EncoderKind::FrameSpectral, EncoderKind::TimeToChannel, EncoderKind::Conv] {
            let mut config = small_config(kind);
            config.t = 2;
            config.n_full = (8, 8);
            config.r = 2;
            let layout = crate::params::Layout::of(&config).unwrap();
            let template = ParamSet::init(&config, 42).unwrap();
            let n_p = layout.total;
            let n_u = config.t * config.d_u * 8 * 8;
            let (lnx, lny) = config.latent_resolution();
            let proj = projection(config.t * config.c_s * lnx * lny);
            let eval = {
                let config = config.clone();
                let template = template.clone();
                move |p: &[f64]| -> Result<(ParamSet, GridField)> {
                    let mut params = template.clone();
                    params.from_flat(&p[..n_p])?;
                    let u = GridField::new(
                        Array4::from_shape_vec((config.t, config.d_u, 8, 8), p[n_p..].to_vec())
                            .expect("flat input matches shape"),
                    )?;
                    Ok((params, u))
                }
            };
            let op = FnOp {
                name: "encode",
                len: n_p + n_u,
                f: {
                    let eval = eval.clone();
                    let config = config.clone();
                    let proj = proj.clone();
                    move |p: &[f64]| {
                        let (fx, fy) = ctx(&config);
                        let (params, u) = eval(p)?;
                        let (h, _) = encode(&fx, &fy, &config, &params, &u)?;
                        Ok(h.data().iter().zip(proj.iter()).map(|(a, b)| a * b).sum())
                    }
                },
                g: {
                    let eval = eval.clone();
                    let config = config.clone();
                    let proj = proj.clone();
                    move |p: &[f64]| {
                        let (fx, fy) = ctx(&config);
                        let (params, u) = eval(p)?;
                        let (_, cache) = encode(&fx, &fy, &config, &params, &u)?;
                        let gh = GridField::new(
                            Array4::from_shape_vec(
                                (config.t, config.c_s, lnx, lny),
                                proj.clone(),
                            )
                            .expect("projection matches output shape"),
                        )?;
                        let mut grads = ParamSet::zeros(&config)?;
                        let gu =
                            encode_backward(&fx, &fy, &config, &params, &cache, &gh, &mut grads)?;
                        let mut flat = grads.to_flat();
                        flat.extend(gu.data().iter());
                        Ok(flat)
                    }
                },
            };
            let mut rng = ChaCha8Rng::seed_from_u64(43);
            let mut start = template.to_flat();
            start.extend((0..n_u).map(|_| rng.random_range(-1.0..1.0)));
            let report = grad_check(&op, &start, 70, 1e-6, 1e-5, 24).unwrap();
            assert!(report.passed, "{kind:?}: {}", report.summary());
        }
    }
}
