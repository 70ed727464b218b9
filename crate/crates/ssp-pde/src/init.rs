//! Random smooth initial conditions built in spectral space.

use ndarray::Array4;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use ssp_core::{signed_freq, Error, Fft2, GridField, Result};
use std::f64::consts::TAU;

/// Draws a smooth random field: half-spectrum coefficients with magnitude
/// `(1 + |k|)^(-decay)` and independent uniform phases, inverse-transformed
/// and normalized to zero mean and unit maximum absolute value. Deterministic
/// in `seed` (ChaCha8 stream, fixed draw order).
pub fn random_initial_condition(
    seed: u64,
    resolution: (usize, usize),
    channels: usize,
    decay: f64,
) -> Result<GridField> {
    if !(decay > 0.0) {
        return Err(Error::config(format!("spectral decay {decay} must be positive")));
    }
    if channels == 0 {
        return Err(Error::config("initial condition needs at least one channel"));
    }
    let (nx, ny) = resolution;
    let fft = Fft2::new(nx, ny)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut spec = Array4::zeros((1, channels, nx, ny / 2 + 1));
    for c in 0..channels {
        for i in 0..nx {
            let kx = signed_freq(i, nx) as f64;
            for j in 0..=ny / 2 {
                let ky = j as f64;
                let mag = (1.0 + (kx * kx + ky * ky).sqrt()).powf(-decay);
                let phase = rng.random_range(0.0..TAU);
                spec[(0, c, i, j)] = Complex64::from_polar(mag, phase);
            }
        }
    }

    // The inverse keeps the real part, which is where any asymmetry in the
    // self-conjugate columns lands; normalization below absorbs the scale.
    let mut field = fft.inverse_raw(&spec);
    for c in 0..channels {
        let mut lane = field.index_axis_mut(ndarray::Axis(1), c);
        let mean = lane.sum() / (nx * ny) as f64;
        lane.mapv_inplace(|v| v - mean);
        let max_abs = lane.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max_abs == 0.0 {
            return Err(Error::divergence(
                "degenerate initial condition: field is identically zero after centering",
            ));
        }
        lane.mapv_inplace(|v| v / max_abs);
    }
    GridField::new(field)
}
