//! Mid-level differentiable layers: axis-wise spectral mode mixers, channel
//! attention, and the residual feature blocks built from them.
//!
//! A mode mixer transforms one spatial axis, applies a dense per-mode channel
//! matrix to the lowest half of the spectrum, zeroes the rest, and transforms
//! back — the output stays real because the inverse transform Hermitian-
//! extends the retained bins. Residual blocks wrap two mixers (or one local
//! convolution) in `h + gelu(·)` so a zero-weight block is exactly the
//! identity.

use ndarray::{Array3, Array4};
use num_complex::Complex64;
use ssp_core::{AxisFft, Error, Result, SpatialAxis};

use crate::ops::{conv2d, conv2d_backward, gelu, gelu_deriv, sigmoid};
use crate::params::{BlockParams, ConvParams, MlpParams};

fn check_mixer(fft: &AxisFft, input: &Array4<f64>, w: &Array3<Complex64>) -> Result<usize> {
    let (modes, co, ci) = w.dim();
    let c = input.dim().1;
    if co != c || ci != c {
        return Err(Error::config(format!(
            "mode mixer is {co}x{ci} but the field has {c} channels"
        )));
    }
    let n = fft.len();
    let have = match fft.axis() {
        SpatialAxis::X => input.dim().2,
        SpatialAxis::Y => input.dim().3,
    };
    if have != n {
        return Err(Error::config(format!(
            "mode mixer planned for axis length {n} applied to length {have}"
        )));
    }
    if modes > n / 2 {
        return Err(Error::config(format!(
            "mode mixer holds {modes} modes but only {} fit below the folding frequency",
            n / 2
        )));
    }
    Ok(modes)
}

/// Applies the per-mode channel matrices along the planned axis. Returns the
/// output and the input's spectral coefficients (needed by the backward
/// pass).
pub fn axis_mix_forward(
    fft: &AxisFft,
    input: &Array4<f64>,
    w: &Array3<Complex64>,
) -> Result<(Array4<f64>, Array4<Complex64>)> {
    let modes = check_mixer(fft, input, w)?;
    let a_hat = fft.forward(input);
    let (nb, c, dx, dy) = a_hat.dim();
    let mut s_hat = Array4::<Complex64>::zeros((nb, c, dx, dy));
    match fft.axis() {
        SpatialAxis::X => {
            for b in 0..nb {
                for k in 0..modes {
                    for j in 0..dy {
                        for co in 0..c {
                            let mut acc = Complex64::default();
                            for ci in 0..c {
                                acc += w[(k, co, ci)] * a_hat[(b, ci, k, j)];
                            }
                            s_hat[(b, co, k, j)] = acc;
                        }
                    }
                }
            }
        }
        SpatialAxis::Y => {
            for b in 0..nb {
                for i in 0..dx {
                    for k in 0..modes {
                        for co in 0..c {
                            let mut acc = Complex64::default();
                            for ci in 0..c {
                                acc += w[(k, co, ci)] * a_hat[(b, ci, i, k)];
                            }
                            s_hat[(b, co, i, k)] = acc;
                        }
                    }
                }
            }
        }
    }
    Ok((fft.inverse(&s_hat), a_hat))
}

/// Backward of [`axis_mix_forward`]: accumulates the complex weight gradient
/// (stored as d/dRe + i·d/dIm) and returns the input cotangent.
pub fn axis_mix_backward(
    fft: &AxisFft,
    a_hat: &Array4<Complex64>,
    w: &Array3<Complex64>,
    gout: &Array4<f64>,
    gw: &mut Array3<Complex64>,
) -> Result<Array4<f64>> {
    let (modes, _, _) = w.dim();
    if gw.dim() != w.dim() {
        return Err(Error::config(
            "mode-mixer gradient buffer does not match the weight shape".to_owned(),
        ));
    }
    let gs = fft.inverse_adjoint(gout);
    let (nb, c, dx, dy) = a_hat.dim();
    if gs.dim() != (nb, c, dx, dy) {
        return Err(Error::config(format!(
            "mode-mixer cotangent spectrum has shape {:?}, expected {:?}",
            gs.dim(),
            (nb, c, dx, dy)
        )));
    }
    let mut ga = Array4::<Complex64>::zeros((nb, c, dx, dy));
    match fft.axis() {
        SpatialAxis::X => {
            for b in 0..nb {
                for k in 0..modes {
                    for j in 0..dy {
                        for co in 0..c {
                            let g = gs[(b, co, k, j)];
                            for ci in 0..c {
                                gw[(k, co, ci)] += g * a_hat[(b, ci, k, j)].conj();
                                ga[(b, ci, k, j)] += w[(k, co, ci)].conj() * g;
                            }
                        }
                    }
                }
            }
        }
        SpatialAxis::Y => {
            for b in 0..nb {
                for i in 0..dx {
                    for k in 0..modes {
                        for co in 0..c {
                            let g = gs[(b, co, i, k)];
                            for ci in 0..c {
                                gw[(k, co, ci)] += g * a_hat[(b, ci, i, k)].conj();
                                ga[(b, ci, i, k)] += w[(k, co, ci)].conj() * g;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(fft.forward_adjoint(&ga))
}

/// Saved activations of one channel-attention application.
#[derive(Debug, Clone)]
pub struct AttnCache {
    pub pool: ndarray::Array2<f64>,
    pub hidden: ndarray::Array2<f64>,
    pub gate: ndarray::Array2<f64>,
}

/// Channel attention: global average pool → two-layer MLP (tanh hidden,
/// logistic output) → per-channel multiplicative gate.
pub fn channel_attention_forward(
    input: &Array4<f64>,
    p: &MlpParams,
) -> Result<(Array4<f64>, AttnCache)> {
    let (n, c, h, wd) = input.dim();
    let hidden_dim = p.b1.len();
    if p.w1.dim() != (hidden_dim, c) || p.w2.dim() != (c, hidden_dim) || p.b2.len() != c {
        return Err(Error::config(format!(
            "attention MLP shapes {:?}/{:?} do not fit {c} channels",
            p.w1.dim(),
            p.w2.dim()
        )));
    }
    let area = (h * wd) as f64;
    let mut pool = ndarray::Array2::<f64>::zeros((n, c));
    for b in 0..n {
        for ch in 0..c {
            pool[(b, ch)] = input.slice(ndarray::s![b, ch, .., ..]).sum() / area;
        }
    }
    let mut hidden = ndarray::Array2::<f64>::zeros((n, hidden_dim));
    for b in 0..n {
        for hh in 0..hidden_dim {
            let mut acc = p.b1[hh];
            for ch in 0..c {
                acc += p.w1[(hh, ch)] * pool[(b, ch)];
            }
            hidden[(b, hh)] = acc.tanh();
        }
    }
    let mut gate = ndarray::Array2::<f64>::zeros((n, c));
    for b in 0..n {
        for ch in 0..c {
            let mut acc = p.b2[ch];
            for hh in 0..hidden_dim {
                acc += p.w2[(ch, hh)] * hidden[(b, hh)];
            }
            gate[(b, ch)] = sigmoid(acc);
        }
    }
    let mut out = input.clone();
    for b in 0..n {
        for ch in 0..c {
            let g = gate[(b, ch)];
            out.slice_mut(ndarray::s![b, ch, .., ..]).mapv_inplace(|v| v * g);
        }
    }
    Ok((out, AttnCache { pool, hidden, gate }))
}

/// Backward of [`channel_attention_forward`].
pub fn channel_attention_backward(
    input: &Array4<f64>,
    p: &MlpParams,
    cache: &AttnCache,
    gout: &Array4<f64>,
    gp: &mut MlpParams,
) -> Result<Array4<f64>> {
    let (n, c, h, wd) = input.dim();
    if gout.dim() != input.dim() {
        return Err(Error::config(format!(
            "attention cotangent shape {:?} does not match input {:?}",
            gout.dim(),
            input.dim()
        )));
    }
    let hidden_dim = p.b1.len();
    let area = (h * wd) as f64;
    let mut ginput = Array4::zeros(input.dim());
    let mut ggate = ndarray::Array2::<f64>::zeros((n, c));
    for b in 0..n {
        for ch in 0..c {
            let g = cache.gate[(b, ch)];
            let mut acc = 0.0;
            for i in 0..h {
                for j in 0..wd {
                    let go = gout[(b, ch, i, j)];
                    acc += go * input[(b, ch, i, j)];
                    ginput[(b, ch, i, j)] = go * g;
                }
            }
            ggate[(b, ch)] = acc;
        }
    }
    // Through the logistic
    let mut gpre2 = ndarray::Array2::<f64>::zeros((n, c));
    for b in 0..n {
        for ch in 0..c {
            let g = cache.gate[(b, ch)];
            gpre2[(b, ch)] = ggate[(b, ch)] * g * (1.0 - g);
        }
    }
    let mut ghidden = ndarray::Array2::<f64>::zeros((n, hidden_dim));
    for b in 0..n {
        for ch in 0..c {
            let g = gpre2[(b, ch)];
            gp.b2[ch] += g;
            for hh in 0..hidden_dim {
                gp.w2[(ch, hh)] += g * cache.hidden[(b, hh)];
                ghidden[(b, hh)] += p.w2[(ch, hh)] * g;
            }
        }
    }
    // Through the tanh
    let mut gpool = ndarray::Array2::<f64>::zeros((n, c));
    for b in 0..n {
        for hh in 0..hidden_dim {
            let t = cache.hidden[(b, hh)];
            let g = ghidden[(b, hh)] * (1.0 - t * t);
            gp.b1[hh] += g;
            for ch in 0..c {
                gp.w1[(hh, ch)] += g * cache.pool[(b, ch)];
                gpool[(b, ch)] += p.w1[(hh, ch)] * g;
            }
        }
    }
    for b in 0..n {
        for ch in 0..c {
            let g = gpool[(b, ch)] / area;
            ginput.slice_mut(ndarray::s![b, ch, .., ..]).mapv_inplace(|v| v + g);
        }
    }
    Ok(ginput)
}

/// Saved state of one residual spectral block.
#[derive(Debug, Clone)]
pub struct SpectralBlockCache {
    pub ax: Array4<Complex64>,
    pub ay: Array4<Complex64>,
    /// The mixed sum before the GELU.
    pub pre: Array4<f64>,
}

/// Residual block `h + gelu(mix_x(h) + mix_y(h))`.
pub fn spectral_block_forward(
    fx: &AxisFft,
    fy: &AxisFft,
    input: &Array4<f64>,
    mix_x: &Array3<Complex64>,
    mix_y: &Array3<Complex64>,
) -> Result<(Array4<f64>, SpectralBlockCache)> {
    let (outx, ax) = axis_mix_forward(fx, input, mix_x)?;
    let (outy, ay) = axis_mix_forward(fy, input, mix_y)?;
    let pre = outx + outy;
    let out = input + &pre.mapv(gelu);
    Ok((out, SpectralBlockCache { ax, ay, pre }))
}

/// Backward of [`spectral_block_forward`].
pub fn spectral_block_backward(
    fx: &AxisFft,
    fy: &AxisFft,
    cache: &SpectralBlockCache,
    mix_x: &Array3<Complex64>,
    mix_y: &Array3<Complex64>,
    gout: &Array4<f64>,
    gmx: &mut Array3<Complex64>,
    gmy: &mut Array3<Complex64>,
) -> Result<Array4<f64>> {
    let mut gpre = cache.pre.mapv(gelu_deriv);
    gpre *= gout;
    let gx = axis_mix_backward(fx, &cache.ax, mix_x, &gpre, gmx)?;
    let gy = axis_mix_backward(fy, &cache.ay, mix_y, &gpre, gmy)?;
    Ok(gout + &gx + &gy)
}

/// Saved state of one residual convolution block.
#[derive(Debug, Clone)]
pub struct ConvBlockCache {
    pub pre: Array4<f64>,
}

/// Residual block `h + gelu(conv3x3(h))`, the local-only stand-in for the
/// spectral block.
pub fn conv_block_forward(input: &Array4<f64>, p: &ConvParams) -> Result<(Array4<f64>, ConvBlockCache)> {
    let pre = conv2d(input, &p.w, &p.b, 1)?;
    let out = input + &pre.mapv(gelu);
    Ok((out, ConvBlockCache { pre }))
}

/// Backward of [`conv_block_forward`].
pub fn conv_block_backward(
    input: &Array4<f64>,
    p: &ConvParams,
    cache: &ConvBlockCache,
    gout: &Array4<f64>,
    gp: &mut ConvParams,
) -> Result<Array4<f64>> {
    let mut gpre = cache.pre.mapv(gelu_deriv);
    gpre *= gout;
    let ginput = conv2d_backward(input, &p.w, 1, &gpre, &mut gp.w, &mut gp.b)?;
    Ok(gout + &ginput)
}

/// Saved state of either residual block flavor.
#[derive(Debug, Clone)]
pub enum BlockCache {
    Spectral(SpectralBlockCache),
    Conv(ConvBlockCache),
}

/// Runs a residual block of whichever flavor the parameters carry. The axis
/// transforms are only consulted for the spectral flavor.
pub fn block_forward(
    fx: &AxisFft,
    fy: &AxisFft,
    input: &Array4<f64>,
    p: &BlockParams,
) -> Result<(Array4<f64>, BlockCache)> {
    match p {
        BlockParams::Spectral { mix_x, mix_y } => {
            let (out, cache) = spectral_block_forward(fx, fy, input, mix_x, mix_y)?;
            Ok((out, BlockCache::Spectral(cache)))
        }
        BlockParams::Conv(conv) => {
            let (out, cache) = conv_block_forward(input, conv)?;
            Ok((out, BlockCache::Conv(cache)))
        }
    }
}

/// Backward of [`block_forward`]; accumulates into the matching gradient
/// variant.
pub fn block_backward(
    fx: &AxisFft,
    fy: &AxisFft,
    input: &Array4<f64>,
    p: &BlockParams,
    cache: &BlockCache,
    gout: &Array4<f64>,
    gp: &mut BlockParams,
) -> Result<Array4<f64>> {
    match (p, cache, gp) {
        (
            BlockParams::Spectral { mix_x, mix_y },
            BlockCache::Spectral(c),
            BlockParams::Spectral { mix_x: gmx, mix_y: gmy },
        ) => spectral_block_backward(fx, fy, c, mix_x, mix_y, gout, gmx, gmy),
        (BlockParams::Conv(conv), BlockCache::Conv(c), BlockParams::Conv(gconv)) => {
            conv_block_backward(input, conv, c, gout, gconv)
        }
        _ => Err(Error::config(
            "residual block parameters, cache, and gradient buffer disagree on flavor".to_owned(),
        )),
    }
}
