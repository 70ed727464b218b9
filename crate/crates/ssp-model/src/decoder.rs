//! The decoder: feature frames back to physical frames.
//!
//! Frame by frame, channel attention reweights the features, two parallel
//! branches process them — a residual spectral block for global structure
//! and a plain 3×3 circular convolution for local detail — their outputs are
//! summed, and a pointwise readout maps to the physical channels. When the
//! encoder reduced the resolution by a stride `r`, a transposed convolution
//! with the same stride restores the full grid.

use ndarray::Array4;
use ssp_core::{AxisFft, Error, GridField, Result};

use crate::config::ModelConfig;
use crate::layers::{
    block_backward, block_forward, channel_attention_backward, channel_attention_forward,
    AttnCache, BlockCache,
};
use crate::ops::{
    conv2d, conv2d_backward, conv_transpose2d, conv_transpose2d_backward, pointwise,
    pointwise_backward,
};
use crate::params::ParamSet;

/// Saved activations of one decoder application.
#[derive(Debug, Clone)]
pub struct DecodeCache {
    /// The decoder input (attention operates directly on it).
    pub attn_in: Array4<f64>,
    pub attn: AttnCache,
    /// Attention output, feeding both branches.
    pub gated: Array4<f64>,
    pub branch: BlockCache,
    /// Summed branch output, input to the readout.
    pub summed: Array4<f64>,
    /// Readout output before upsampling (equal to the final output at r=1).
    pub read: Array4<f64>,
}

/// Decodes a window of feature frames into physical frames at the full
/// resolution.
pub fn decode(
    fx: &AxisFft,
    fy: &AxisFft,
    config: &ModelConfig,
    params: &ParamSet,
    h: &GridField,
) -> Result<(GridField, DecodeCache)> {
    let (nx, ny) = config.latent_resolution();
    if h.channels() != config.c_s || h.nx() != nx || h.ny() != ny {
        return Err(Error::config(format!(
            "decoder input is {}x{}x{}x{}, expected channels {} at {nx}x{ny}",
            h.batch(),
            h.channels(),
            h.nx(),
            h.ny(),
            config.c_s
        )));
    }
    let (gated, attn) = channel_attention_forward(h.data(), &params.dec_attn)?;
    let (branch_out, branch) = block_forward(fx, fy, &gated, &params.dec_branch)?;
    let local_out = conv2d(&gated, &params.dec_local.w, &params.dec_local.b, 1)?;
    let summed = branch_out + local_out;
    let read = pointwise(&summed, &params.dec_read.w, &params.dec_read.b)?;
    let out = if let Some(up) = &params.dec_up {
        conv_transpose2d(&read, &up.w, &up.b, config.r)?
    } else {
        read.clone()
    };
    Ok((
        GridField::new(out)?,
        DecodeCache { attn_in: h.data().clone(), attn, gated, branch, summed, read },
    ))
}

/// Backward of [`decode`]: accumulates parameter gradients and returns the
/// cotangent of the feature window.
pub fn decode_backward(
    fx: &AxisFft,
    fy: &AxisFft,
    config: &ModelConfig,
    params: &ParamSet,
    cache: &DecodeCache,
    gu: &GridField,
    grads: &mut ParamSet,
) -> Result<GridField> {
    let g_read = if let Some(up) = &params.dec_up {
        let gup = grads
            .dec_up
            .as_mut()
            .ok_or_else(|| Error::config("gradient buffer lacks the upsampler".to_owned()))?;
        conv_transpose2d_backward(&cache.read, &up.w, config.r, gu.data(), &mut gup.w, &mut gup.b)?
    } else {
        gu.data().clone()
    };
    let g_summed = pointwise_backward(
        &cache.summed,
        &params.dec_read.w,
        &g_read,
        &mut grads.dec_read.w,
        &mut grads.dec_read.b,
    )?;
    let g_branch_in = block_backward(
        fx,
        fy,
        &cache.gated,
        &params.dec_branch,
        &cache.branch,
        &g_summed,
        &mut grads.dec_branch,
    )?;
    let g_local_in = conv2d_backward(
        &cache.gated,
        &params.dec_local.w,
        1,
        &g_summed,
        &mut grads.dec_local.w,
        &mut grads.dec_local.b,
    )?;
    let g_gated = g_branch_in + g_local_in;
    let gh = channel_attention_backward(
        &cache.attn_in,
        &params.dec_attn,
        &cache.attn,
        &g_gated,
        &mut grads.dec_attn,
    )?;
    GridField::new(gh)
}
