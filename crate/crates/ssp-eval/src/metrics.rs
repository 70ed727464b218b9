//! Error metrics between predicted and true trajectory windows.
//!
//! Every metric is computed per frame and then averaged over the frames of
//! the window; averaging over samples happens one level up, in the rollout
//! protocols. All functions take equal-shaped `(frames, channels, nx, ny)`
//! views.
//!
//! The three spectral bands split the modes by radial integer wavenumber
//! `ρ = ‖k‖` into thirds of the Nyquist radius `ρ_Nyq = min(nx, ny)/2`:
//! low `ρ ≤ ρ_Nyq/3`, mid `ρ_Nyq/3 < ρ ≤ 2ρ_Nyq/3`, high the rest
//! (including corner modes beyond `ρ_Nyq`). Band energies are squared
//! spectral differences normalized by `(nx·ny)²`, averaged over the modes
//! of the band (and channels); `f_mse` is the same average over all modes.
//! The boundary metric is the RMS of the difference over the outermost ring
//! of grid cells (first and last row and column).

use ndarray::{ArrayView4, Axis};
use ssp_core::{Error, Fft2, Result};

fn check_shapes(
    pred: &ArrayView4<f64>,
    truth: &ArrayView4<f64>,
) -> Result<(usize, usize, usize, usize)> {
    if pred.dim() != truth.dim() {
        return Err(Error::config(format!(
            "prediction shape {:?} does not match truth shape {:?}",
            pred.dim(),
            truth.dim()
        )));
    }
    let (frames, c, nx, ny) = pred.dim();
    if frames == 0 || c == 0 || nx == 0 || ny == 0 {
        return Err(Error::config(format!(
            "metric windows must be non-empty, got shape {:?}",
            pred.dim()
        )));
    }
    Ok((frames, c, nx, ny))
}

/// Relative L2 error: per frame `‖pred − truth‖₂ / ‖truth‖₂` over all
/// channels and grid cells, averaged over frames. A truth frame with zero
/// norm has no defined ratio and is reported as an error naming the frame.
pub fn rel_l2(pred: ArrayView4<f64>, truth: ArrayView4<f64>) -> Result<f64> {
    let (frames, ..) = check_shapes(&pred, &truth)?;
    let mut acc = 0.0;
    for f in 0..frames {
        let (pf, tf) = (pred.index_axis(Axis(0), f), truth.index_axis(Axis(0), f));
        let mut num = 0.0;
        let mut den = 0.0;
        for (p, t) in pf.iter().zip(tf.iter()) {
            num += (p - t) * (p - t);
            den += t * t;
        }
        if den == 0.0 {
            return Err(Error::config(format!(
                "truth frame {f} has zero norm, its relative error is undefined"
            )));
        }
        acc += (num / den).sqrt();
    }
    Ok(acc / frames as f64)
}

/// Worst-case pointwise deviation: per frame `max |pred − truth|` over all
/// channels and grid cells, averaged over frames.
pub fn e_max(pred: ArrayView4<f64>, truth: ArrayView4<f64>) -> Result<f64> {
    let (frames, ..) = check_shapes(&pred, &truth)?;
    let mut acc = 0.0;
    for f in 0..frames {
        let (pf, tf) = (pred.index_axis(Axis(0), f), truth.index_axis(Axis(0), f));
        let mut worst = 0.0f64;
        for (p, t) in pf.iter().zip(tf.iter()) {
            worst = worst.max((p - t).abs());
        }
        acc += worst;
    }
    Ok(acc / frames as f64)
}

/// Boundary-ring RMS: per frame, the root mean square of `pred − truth`
/// over the cells of the outermost ring (width one), pooled over channels;
/// averaged over frames.
pub fn brms(pred: ArrayView4<f64>, truth: ArrayView4<f64>) -> Result<f64> {
    let (frames, c, nx, ny) = check_shapes(&pred, &truth)?;
    let ring = nx * ny - nx.saturating_sub(2) * ny.saturating_sub(2);
    let mut acc = 0.0;
    for f in 0..frames {
        let mut sum = 0.0;
        for ci in 0..c {
            for i in 0..nx {
                for j in 0..ny {
                    if i == 0 || i == nx - 1 || j == 0 || j == ny - 1 {
                        let d = pred[(f, ci, i, j)] - truth[(f, ci, i, j)];
                        sum += d * d;
                    }
                }
            }
        }
        acc += (sum / (ring * c) as f64).sqrt();
    }
    Ok(acc / frames as f64)
}

/// Weight of one half-spectrum column: interior columns stand for their
/// conjugate mirror as well.
fn column_weight(j: usize, ny: usize) -> f64 {
    if j == 0 || (ny % 2 == 0 && j == ny / 2) {
        1.0
    } else {
        2.0
    }
}

/// Radial wavenumber of the mode at half-spectrum index `(i, j)`.
fn mode_radius(i: usize, j: usize, nx: usize) -> f64 {
    let kx = i.min(nx - i) as f64;
    let ky = j as f64;
    (kx * kx + ky * ky).sqrt()
}

/// Band index of a radius: 0 low, 1 mid, 2 high.
fn band_of(rho: f64, rho_nyq: f64) -> usize {
    if rho <= rho_nyq / 3.0 {
        0
    } else if rho <= 2.0 * rho_nyq / 3.0 {
        1
    } else {
        2
    }
}

/// Number of modes of the full `nx × ny` spectral plane in each band
/// (low, mid, high); the three always sum to `nx · ny`.
pub fn band_counts(nx: usize, ny: usize) -> (usize, usize, usize) {
    let rho_nyq = nx.min(ny) as f64 / 2.0;
    let mut counts = [0usize; 3];
    for i in 0..nx {
        for j in 0..ny {
            let kx = i.min(nx - i) as f64;
            let ky = j.min(ny - j) as f64;
            counts[band_of((kx * kx + ky * ky).sqrt(), rho_nyq)] += 1;
        }
    }
    (counts[0], counts[1], counts[2])
}

/// Spectral distortion split by band, using a caller-provided transform
/// plan for the window's resolution. Returns `(f_low, f_mid, f_high,
/// f_mse)`.
pub fn band_errors_with(
    fft: &Fft2,
    pred: ArrayView4<f64>,
    truth: ArrayView4<f64>,
) -> Result<(f64, f64, f64, f64)> {
    let (frames, c, nx, ny) = check_shapes(&pred, &truth)?;
    if (fft.nx(), fft.ny()) != (nx, ny) {
        return Err(Error::config(format!(
            "transform planned for {}x{} cannot serve a {nx}x{ny} window",
            fft.nx(),
            fft.ny()
        )));
    }
    let diff = &pred - &truth;
    let spec = fft.forward_raw(&diff);
    let nyh = ny / 2 + 1;
    let rho_nyq = nx.min(ny) as f64 / 2.0;
    let (n_low, n_mid, n_high) = band_counts(nx, ny);
    let norm = ((nx * ny) * (nx * ny)) as f64;

    let mut sums = [0.0f64; 4];
    for f in 0..frames {
        let mut frame_sums = [0.0f64; 3];
        for ci in 0..c {
            for i in 0..nx {
                for j in 0..nyh {
                    let w = column_weight(j, ny);
                    let v = spec[(f, ci, i, j)];
                    let energy = w * v.norm_sqr() / norm;
                    frame_sums[band_of(mode_radius(i, j, nx), rho_nyq)] += energy;
                }
            }
        }
        let total: f64 = frame_sums.iter().sum();
        sums[0] += frame_sums[0] / (n_low * c) as f64;
        sums[1] += frame_sums[1] / (n_mid * c) as f64;
        sums[2] += frame_sums[2] / (n_high * c) as f64;
        sums[3] += total / (nx * ny * c) as f64;
    }
    let inv = 1.0 / frames as f64;
    Ok((sums[0] * inv, sums[1] * inv, sums[2] * inv, sums[3] * inv))
}

/// Convenience wrapper around [`band_errors_with`] that plans the transform
/// itself.
pub fn band_errors(
    pred: ArrayView4<f64>,
    truth: ArrayView4<f64>,
) -> Result<(f64, f64, f64, f64)> {
    let (_, _, nx, ny) = check_shapes(&pred, &truth)?;
    band_errors_with(&Fft2::new(nx, ny)?, pred, truth)
}
