//! Time steppers for the benchmark equations on the 2π-periodic square.
//!
//! Linear kinds advance exactly: every Fourier mode is multiplied by
//! `exp(Δt·a(k))` with `a(k) = −ν|k|²` (heat) or `a(k) = −ν|k|² − i·c·k`
//! (advection-diffusion), wavenumbers being the signed integers of the
//! 2π-periodic grid. The reaction-diffusion system takes IMEX steps: the
//! FitzHugh–Nagumo reaction advances by explicit Euler in physical space,
//! then diffusion applies its exact spectral integrating factor.

use num_complex::Complex64;
use ssp_core::{signed_freq, Error, Fft2, GridField, Result};

use crate::spec::{PdeKind, PdeSpec};

/// Advances a linear equation exactly by `dt`. Works on any batch/channel
/// layout; every channel sees the same coefficients.
pub fn exact_linear_step(state: &GridField, spec: &PdeSpec, dt: f64) -> Result<GridField> {
    spec.validate()?;
    if !dt.is_finite() || dt < 0.0 {
        return Err(Error::config(format!("step length dt = {dt} must be a finite nonnegative value")));
    }
    let (cx, cy) = match spec.kind {
        PdeKind::Heat => (0.0, 0.0),
        PdeKind::AdvectionDiffusion => spec.velocity,
        PdeKind::ReactionDiffusion => {
            return Err(Error::config(
                "exact_linear_step supports only the linear kinds; \
                 use reaction_diffusion_step for the nonlinear system",
            ))
        }
    };
    let (nx, ny) = (state.nx(), state.ny());
    let fft = Fft2::new(nx, ny)?;
    let mut spec_field = fft.forward(state)?;
    let data = spec_field.data_mut();
    for i in 0..nx {
        let kx = signed_freq(i, nx) as f64;
        for j in 0..=ny / 2 {
            let ky = j as f64;
            let k2 = kx * kx + ky * ky;
            // exp(dt·(−ν|k|² − i c·k)) — real decay times unit-modulus phase.
            let decay = (-spec.nu * k2 * dt).exp();
            let phase = -(cx * kx + cy * ky) * dt;
            let mult = Complex64::from_polar(decay, phase);
            for b in 0..data.dim().0 {
                for c in 0..data.dim().1 {
                    data[(b, c, i, j)] *= mult;
                }
            }
        }
    }
    fft.inverse(&spec_field)
}

/// One IMEX step of the two-channel reaction-diffusion system: explicit Euler
/// on `R_u = u − u³ − k_r − v`, `R_v = u − v` (scaled by `reaction_strength`),
/// then exact spectral diffusion with per-channel diffusivities.
pub fn reaction_diffusion_step(state: &GridField, spec: &PdeSpec) -> Result<GridField> {
    spec.validate()?;
    if spec.kind != PdeKind::ReactionDiffusion {
        return Err(Error::config(format!(
            "reaction_diffusion_step called with kind {:?}",
            spec.kind
        )));
    }
    if state.channels() != 2 {
        return Err(Error::config(format!(
            "reaction-diffusion state needs channels (u, v), got {} channels",
            state.channels()
        )));
    }
    let (nx, ny) = (state.nx(), state.ny());
    let (batch, dt, s) = (state.batch(), spec.dt, spec.reaction_strength);

    // Reaction, explicit Euler in physical space.
    let mut reacted = state.clone();
    {
        let data = reacted.data_mut();
        for b in 0..batch {
            for i in 0..nx {
                for j in 0..ny {
                    let u = data[(b, 0, i, j)];
                    let v = data[(b, 1, i, j)];
                    data[(b, 0, i, j)] = u + dt * s * (u - u * u * u - spec.coupling - v);
                    data[(b, 1, i, j)] = v + dt * s * (u - v);
                }
            }
        }
    }

    // Diffusion, exact per-mode integrating factor per channel.
    let fft = Fft2::new(nx, ny)?;
    let mut spec_field = fft.forward(&reacted)?;
    {
        let data = spec_field.data_mut();
        for i in 0..nx {
            let kx = signed_freq(i, nx) as f64;
            for j in 0..=ny / 2 {
                let k2 = kx * kx + (j * j) as f64;
                let mult_u = (-spec.diff_u * k2 * dt).exp();
                let mult_v = (-spec.diff_v * k2 * dt).exp();
                for b in 0..batch {
                    data[(b, 0, i, j)] *= mult_u;
                    data[(b, 1, i, j)] *= mult_v;
                }
            }
        }
    }
    let out = fft.inverse(&spec_field)?;
    if !out.is_finite() {
        return Err(Error::divergence(format!(
            "reaction-diffusion step produced non-finite values \
             (dt = {}, strength = {}, coupling = {}, diffusivities = ({}, {}))",
            spec.dt, spec.reaction_strength, spec.coupling, spec.diff_u, spec.diff_v
        )));
    }
    Ok(out)
}

/// Advances one saved frame: `spec.substeps` solver steps of length `spec.dt`.
pub fn advance_frame(state: &GridField, spec: &PdeSpec) -> Result<GridField> {
    let mut current = state.clone();
    for _ in 0..spec.substeps {
        current = match spec.kind {
            PdeKind::Heat | PdeKind::AdvectionDiffusion => {
                exact_linear_step(&current, spec, spec.dt)?
            }
            PdeKind::ReactionDiffusion => reaction_diffusion_step(&current, spec)?,
        };
    }
    Ok(current)
}
