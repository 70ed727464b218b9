//! Low-level differentiable building blocks: circular convolutions, the
//! patch-painting upsampler, 1×1 channel maps, and pointwise activations.
//!
//! Everything here works on `(batch, channels, height, width)` arrays and
//! comes as a forward/backward pair. Backward functions take the saved
//! forward input, the output cotangent, and accumulate parameter gradients
//! in place (`+=`) so one gradient buffer can collect contributions from a
//! whole rollout; they return the input cotangent for further chaining.
//! Convolutions wrap around both spatial edges, matching the periodic
//! domains the model is built for.

use ndarray::{Array1, Array2, Array4, ArrayView1, ArrayView4};
use ssp_core::{Error, Result};

/// GELU with the usual tanh approximation.
pub fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

/// Derivative of [`gelu`].
pub fn gelu_deriv(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let u = C * (x + 0.044_715 * x * x * x);
    let t = u.tanh();
    let du = C * (1.0 + 3.0 * 0.044_715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

/// Logistic function.
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn check_conv_shapes(
    input: &ArrayView4<f64>,
    w: &ArrayView4<f64>,
    b: &ArrayView1<f64>,
    stride: usize,
) -> Result<(usize, usize, usize, usize, usize, usize, usize, usize)> {
    let (n, ci, h, wd) = input.dim();
    let (co, ci_w, kh, kw) = w.dim();
    if ci != ci_w {
        return Err(Error::config(format!(
            "convolution input has {ci} channels but the kernel expects {ci_w}"
        )));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::config(format!(
            "convolution kernel {kh}x{kw} must have odd extent for symmetric wrap-around"
        )));
    }
    if b.len() != co {
        return Err(Error::config(format!(
            "bias has {} entries for {co} output channels",
            b.len()
        )));
    }
    if stride == 0 || h % stride != 0 || wd % stride != 0 {
        return Err(Error::config(format!(
            "stride {stride} must divide the {h}x{wd} input"
        )));
    }
    Ok((n, ci, h, wd, co, kh, kw, stride))
}

/// Gathers wrapped patches into a `(ci*kh*kw, n*ho*wo)` matrix so the
/// convolution becomes one matrix product.
fn im2col(input: &ArrayView4<f64>, kh: usize, kw: usize, stride: usize) -> Array2<f64> {
    let (n, ci, h, w) = input.dim();
    let (ho, wo) = (h / stride, w / stride);
    let (ph, pw) = (kh / 2, kw / 2);
    let mut cols = Array2::zeros((ci * kh * kw, n * ho * wo));
    for b in 0..n {
        for c in 0..ci {
            for u in 0..kh {
                for v in 0..kw {
                    let row = (c * kh + u) * kw + v;
                    for i in 0..ho {
                        let si = (i * stride + u + h - ph) % h;
                        for j in 0..wo {
                            let sj = (j * stride + v + w - pw) % w;
                            cols[(row, (b * ho + i) * wo + j)] = input[(b, c, si, sj)];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-add of [`im2col`]'s transpose: folds a column-matrix cotangent
/// back onto the input grid.
fn col2im_add(
    gcols: &Array2<f64>,
    ginput: &mut Array4<f64>,
    kh: usize,
    kw: usize,
    stride: usize,
) {
    let (n, ci, h, w) = ginput.dim();
    let (ho, wo) = (h / stride, w / stride);
    let (ph, pw) = (kh / 2, kw / 2);
    for b in 0..n {
        for c in 0..ci {
            for u in 0..kh {
                for v in 0..kw {
                    let row = (c * kh + u) * kw + v;
                    for i in 0..ho {
                        let si = (i * stride + u + h - ph) % h;
                        for j in 0..wo {
                            let sj = (j * stride + v + w - pw) % w;
                            ginput[(b, c, si, sj)] += gcols[(row, (b * ho + i) * wo + j)];
                        }
                    }
                }
            }
        }
    }
}

/// Circularly padded convolution with stride: `(n, ci, h, w)` →
/// `(n, co, h/stride, w/stride)`.
pub fn conv2d(
    input: &Array4<f64>,
    w: &Array4<f64>,
    b: &Array1<f64>,
    stride: usize,
) -> Result<Array4<f64>> {
    let (n, ci, h, wd, co, kh, kw, stride) =
        check_conv_shapes(&input.view(), &w.view(), &b.view(), stride)?;
    let (ho, wo) = (h / stride, wd / stride);
    let cols = im2col(&input.view(), kh, kw, stride);
    let w2 = w
        .view()
        .into_shape_with_order((co, ci * kh * kw))
        .expect("kernel is standard layout");
    let out2 = w2.dot(&cols);
    let mut out = Array4::zeros((n, co, ho, wo));
    for bi in 0..n {
        for c in 0..co {
            let bias = b[c];
            for i in 0..ho {
                for j in 0..wo {
                    out[(bi, c, i, j)] = out2[(c, (bi * ho + i) * wo + j)] + bias;
                }
            }
        }
    }
    Ok(out)
}

/// Backward of [`conv2d`]: accumulates kernel/bias gradients, returns the
/// input cotangent.
pub fn conv2d_backward(
    input: &Array4<f64>,
    w: &Array4<f64>,
    stride: usize,
    gout: &Array4<f64>,
    gw: &mut Array4<f64>,
    gb: &mut Array1<f64>,
) -> Result<Array4<f64>> {
    let (n, ci, h, wd) = input.dim();
    let (co, _, kh, kw) = w.dim();
    let (ho, wo) = (h / stride, wd / stride);
    if gout.dim() != (n, co, ho, wo) {
        return Err(Error::config(format!(
            "convolution cotangent has shape {:?}, expected {:?}",
            gout.dim(),
            (n, co, ho, wo)
        )));
    }
    if gw.dim() != w.dim() || gb.len() != co {
        return Err(Error::config(
            "convolution gradient buffers do not match the kernel shape".to_owned(),
        ));
    }
    let mut gout2 = Array2::zeros((co, n * ho * wo));
    for bi in 0..n {
        for c in 0..co {
            for i in 0..ho {
                for j in 0..wo {
                    let g = gout[(bi, c, i, j)];
                    gout2[(c, (bi * ho + i) * wo + j)] = g;
                    gb[c] += g;
                }
            }
        }
    }
    let cols = im2col(&input.view(), kh, kw, stride);
    let gw2 = gout2.dot(&cols.t());
    {
        let mut gw_flat = gw
            .view_mut()
            .into_shape_with_order((co, ci * kh * kw))
            .expect("gradient buffer is standard layout");
        gw_flat += &gw2;
    }
    let w2 = w
        .view()
        .into_shape_with_order((co, ci * kh * kw))
        .expect("kernel is standard layout");
    let gcols = w2.t().dot(&gout2);
    let mut ginput = Array4::zeros(input.dim());
    col2im_add(&gcols, &mut ginput, kh, kw, stride);
    Ok(ginput)
}

/// Transposed convolution with kernel extent equal to the stride `r`: each
/// input pixel paints one disjoint r×r output patch. `(n, ci, h, w)` →
/// `(n, co, h*r, w*r)` with kernel `(ci, co, r, r)`.
pub fn conv_transpose2d(
    input: &Array4<f64>,
    w: &Array4<f64>,
    b: &Array1<f64>,
    r: usize,
) -> Result<Array4<f64>> {
    let (n, ci, h, wd) = input.dim();
    let (ci_w, co, rh, rw) = w.dim();
    if ci != ci_w || rh != r || rw != r || r == 0 {
        return Err(Error::config(format!(
            "upsampler kernel {:?} does not match {ci} input channels at factor {r}",
            w.dim()
        )));
    }
    if b.len() != co {
        return Err(Error::config(format!(
            "upsampler bias has {} entries for {co} output channels",
            b.len()
        )));
    }
    let mut out = Array4::zeros((n, co, h * r, wd * r));
    for bi in 0..n {
        for c in 0..co {
            out.slice_mut(ndarray::s![bi, c, .., ..]).fill(b[c]);
            for cin in 0..ci {
                for i in 0..h {
                    for j in 0..wd {
                        let v = input[(bi, cin, i, j)];
                        for p in 0..r {
                            for q in 0..r {
                                out[(bi, c, i * r + p, j * r + q)] += v * w[(cin, c, p, q)];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Backward of [`conv_transpose2d`].
pub fn conv_transpose2d_backward(
    input: &Array4<f64>,
    w: &Array4<f64>,
    r: usize,
    gout: &Array4<f64>,
    gw: &mut Array4<f64>,
    gb: &mut Array1<f64>,
) -> Result<Array4<f64>> {
    let (n, ci, h, wd) = input.dim();
    let (_, co, _, _) = w.dim();
    if gout.dim() != (n, co, h * r, wd * r) {
        return Err(Error::config(format!(
            "upsampler cotangent has shape {:?}, expected {:?}",
            gout.dim(),
            (n, co, h * r, wd * r)
        )));
    }
    let mut ginput = Array4::zeros(input.dim());
    for bi in 0..n {
        for c in 0..co {
            for i in 0..h * r {
                for j in 0..wd * r {
                    gb[c] += gout[(bi, c, i, j)];
                }
            }
            for cin in 0..ci {
                for i in 0..h {
                    for j in 0..wd {
                        let v = input[(bi, cin, i, j)];
                        let mut acc = 0.0;
                        for p in 0..r {
                            for q in 0..r {
                                let g = gout[(bi, c, i * r + p, j * r + q)];
                                gw[(cin, c, p, q)] += v * g;
                                acc += w[(cin, c, p, q)] * g;
                            }
                        }
                        ginput[(bi, cin, i, j)] += acc;
                    }
                }
            }
        }
    }
    Ok(ginput)
}

/// 1×1 channel map: `(n, ci, h, w)` → `(n, co, h, w)` with weight `(co, ci)`.
pub fn pointwise(input: &Array4<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Result<Array4<f64>> {
    let (n, ci, h, wd) = input.dim();
    let (co, ci_w) = w.dim();
    if ci != ci_w || b.len() != co {
        return Err(Error::config(format!(
            "channel map ({co}x{ci_w} + {} bias) does not fit {ci} input channels",
            b.len()
        )));
    }
    let mut out = Array4::zeros((n, co, h, wd));
    for bi in 0..n {
        let inp = input
            .slice(ndarray::s![bi, .., .., ..])
            .into_shape_with_order((ci, h * wd))
            .expect("input is standard layout");
        let prod = w.dot(&inp);
        let mut outp = out.slice_mut(ndarray::s![bi, .., .., ..]);
        let mut outp = outp
            .view_mut()
            .into_shape_with_order((co, h * wd))
            .expect("output is standard layout");
        outp.assign(&prod);
        for c in 0..co {
            outp.row_mut(c).mapv_inplace(|v| v + b[c]);
        }
    }
    Ok(out)
}

/// Backward of [`pointwise`].
pub fn pointwise_backward(
    input: &Array4<f64>,
    w: &Array2<f64>,
    gout: &Array4<f64>,
    gw: &mut Array2<f64>,
    gb: &mut Array1<f64>,
) -> Result<Array4<f64>> {
    let (n, ci, h, wd) = input.dim();
    let (co, _) = w.dim();
    if gout.dim() != (n, co, h, wd) {
        return Err(Error::config(format!(
            "channel-map cotangent has shape {:?}, expected {:?}",
            gout.dim(),
            (n, co, h, wd)
        )));
    }
    let mut ginput = Array4::zeros(input.dim());
    for bi in 0..n {
        let inp = input
            .slice(ndarray::s![bi, .., .., ..])
            .into_shape_with_order((ci, h * wd))
            .expect("input is standard layout");
        let g = gout
            .slice(ndarray::s![bi, .., .., ..])
            .into_shape_with_order((co, h * wd))
            .expect("cotangent is standard layout");
        *gw += &g.dot(&inp.t());
        for c in 0..co {
            gb[c] += g.row(c).sum();
        }
        let gi = w.t().dot(&g);
        let mut gslice = ginput.slice_mut(ndarray::s![bi, .., .., ..]);
        let mut gslice = gslice
            .view_mut()
            .into_shape_with_order((ci, h * wd))
            .expect("gradient is standard layout");
        gslice.assign(&gi);
    }
    Ok(ginput)
}
