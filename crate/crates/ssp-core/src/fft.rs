//! Half-spectrum Fourier transforms with hand-written adjoints.
//!
//! [`Fft2`] transforms real `(B, C, nx, ny)` grids to half spectra `(B, C, nx,
//! ny/2 + 1)` and back; [`AxisFft`] does the same along a single spatial axis,
//! which the encoder/decoder mode mixers use. Conventions:
//!
//! * forward transforms are unnormalized sums `Σ x·exp(-2πi k·n/N)`;
//! * inverse transforms carry the full `1/N` factor and return the real part,
//!   so they accept arbitrary complex input without assuming exact symmetry;
//! * `*_adjoint` methods are the transposes of those real-linear maps under the
//!   pairing `⟨a, b⟩ = Re Σ aᵢ·conj(bᵢ)`, which is what reverse-mode
//!   differentiation through a transform needs.
//!
//! The 2D transform is built from batched 1D complex FFTs: rows along y, a
//! transpose, rows along x, and a transpose back. All loops run in a fixed
//! order, so results are bitwise reproducible.

use std::sync::Arc;

use ndarray::{Array4, Axis, Zip};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::{validate_resolution, GridField, SpectralField};

/// Grows `scratch` if the plan needs more room, then hands back the slice the
/// plan expects.
fn scratch_for<'a>(scratch: &'a mut Vec<Complex64>, plan: &Arc<dyn Fft<f64>>) -> &'a mut [Complex64] {
    let need = plan.get_inplace_scratch_len();
    if scratch.len() < need {
        scratch.resize(need, Complex64::default());
    }
    &mut scratch[..need]
}

/// Planned 2D transform between an `nx x ny` real grid and its half spectrum.
pub struct Fft2 {
    nx: usize,
    ny: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        validate_resolution(nx, ny)?;
        let mut planner = FftPlanner::new();
        Ok(Fft2 {
            nx,
            ny,
            fwd_x: planner.plan_fft_forward(nx),
            inv_x: planner.plan_fft_inverse(nx),
            fwd_y: planner.plan_fft_forward(ny),
            inv_y: planner.plan_fft_inverse(ny),
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    fn check_grid(&self, nx: usize, ny: usize) -> Result<()> {
        if nx != self.nx || ny != self.ny {
            return Err(Error::config(format!(
                "field resolution {nx}x{ny} does not match planned transform {}x{}",
                self.nx, self.ny
            )));
        }
        Ok(())
    }

    /// Full unnormalized 2D complex transform of one row-major `nx x ny`
    /// matrix, in place. `tbuf` is an `ny x nx` transpose workspace.
    fn c2c_2d(
        &self,
        buf: &mut [Complex64],
        tbuf: &mut [Complex64],
        scratch: &mut Vec<Complex64>,
        forward: bool,
    ) {
        let (nx, ny) = (self.nx, self.ny);
        let (plan_x, plan_y) = if forward {
            (&self.fwd_x, &self.fwd_y)
        } else {
            (&self.inv_x, &self.inv_y)
        };
        // Rows of length ny, nx of them, processed in one batched call.
        plan_y.process_with_scratch(buf, scratch_for(scratch, plan_y));
        for i in 0..nx {
            for j in 0..ny {
                tbuf[j * nx + i] = buf[i * ny + j];
            }
        }
        plan_x.process_with_scratch(tbuf, scratch_for(scratch, plan_x));
        for j in 0..ny {
            for i in 0..nx {
                buf[i * ny + j] = tbuf[j * nx + i];
            }
        }
    }

    /// Real grid to half spectrum (unnormalized).
    pub fn forward(&self, field: &GridField) -> Result<SpectralField> {
        self.check_grid(field.nx(), field.ny())?;
        SpectralField::new(self.forward_raw(field.data()))
    }

    /// Raw-array variant of [`Fft2::forward`]; the caller guarantees the last
    /// two axes match the planned resolution.
    pub fn forward_raw(&self, data: &Array4<f64>) -> Array4<Complex64> {
        let (b, c, nx, ny) = data.dim();
        debug_assert_eq!((nx, ny), (self.nx, self.ny), "unplanned resolution");
        let nyh = ny / 2 + 1;
        let mut out = Array4::zeros((b, c, nx, nyh));
        let mut buf = vec![Complex64::default(); nx * ny];
        let mut tbuf = vec![Complex64::default(); nx * ny];
        let mut scratch = Vec::new();
        for bi in 0..b {
            for ci in 0..c {
                for i in 0..nx {
                    for j in 0..ny {
                        buf[i * ny + j] = Complex64::new(data[(bi, ci, i, j)], 0.0);
                    }
                }
                self.c2c_2d(&mut buf, &mut tbuf, &mut scratch, true);
                for i in 0..nx {
                    for j in 0..nyh {
                        out[(bi, ci, i, j)] = buf[i * ny + j];
                    }
                }
            }
        }
        out
    }

    /// Half spectrum back to a real grid; carries the `1/(nx·ny)` factor and
    /// returns the real part of the reconstruction.
    pub fn inverse(&self, spec: &SpectralField) -> Result<GridField> {
        self.check_grid(spec.nx(), spec.ny())?;
        GridField::new(self.inverse_raw(spec.data()))
    }

    /// Raw-array variant of [`Fft2::inverse`].
    pub fn inverse_raw(&self, data: &Array4<Complex64>) -> Array4<f64> {
        let (b, c, nx, nyh) = data.dim();
        let ny = 2 * (nyh - 1);
        debug_assert_eq!((nx, ny), (self.nx, self.ny), "unplanned resolution");
        let norm = 1.0 / (nx * ny) as f64;
        let mut out = Array4::zeros((b, c, nx, ny));
        let mut buf = vec![Complex64::default(); nx * ny];
        let mut tbuf = vec![Complex64::default(); nx * ny];
        let mut scratch = Vec::new();
        for bi in 0..b {
            for ci in 0..c {
                // Rebuild the redundant columns from Hermitian symmetry:
                // full[kx, ky] = conj(half[-kx mod nx, ny - ky]) for ky > ny/2.
                for i in 0..nx {
                    for j in 0..nyh {
                        buf[i * ny + j] = data[(bi, ci, i, j)];
                    }
                    for j in nyh..ny {
                        let im = (nx - i) % nx;
                        buf[i * ny + j] = data[(bi, ci, im, ny - j)].conj();
                    }
                }
                self.c2c_2d(&mut buf, &mut tbuf, &mut scratch, false);
                for i in 0..nx {
                    for j in 0..ny {
                        out[(bi, ci, i, j)] = buf[i * ny + j].re * norm;
                    }
                }
            }
        }
        out
    }

    /// Adjoint of [`Fft2::forward`]: maps a cotangent on the half spectrum back
    /// to a cotangent on the real grid.
    pub fn forward_adjoint(&self, cotangent: &SpectralField) -> Result<GridField> {
        self.check_grid(cotangent.nx(), cotangent.ny())?;
        GridField::new(self.forward_adjoint_raw(cotangent.data()))
    }

    /// Raw-array variant of [`Fft2::forward_adjoint`]. Zero-pads the dropped
    /// columns, applies the unnormalized inverse transform, keeps the real
    /// part.
    pub fn forward_adjoint_raw(&self, cotangent: &Array4<Complex64>) -> Array4<f64> {
        let (b, c, nx, nyh) = cotangent.dim();
        let ny = 2 * (nyh - 1);
        debug_assert_eq!((nx, ny), (self.nx, self.ny), "unplanned resolution");
        let mut out = Array4::zeros((b, c, nx, ny));
        let mut buf = vec![Complex64::default(); nx * ny];
        let mut tbuf = vec![Complex64::default(); nx * ny];
        let mut scratch = Vec::new();
        for bi in 0..b {
            for ci in 0..c {
                for i in 0..nx {
                    for j in 0..nyh {
                        buf[i * ny + j] = cotangent[(bi, ci, i, j)];
                    }
                    for j in nyh..ny {
                        buf[i * ny + j] = Complex64::default();
                    }
                }
                self.c2c_2d(&mut buf, &mut tbuf, &mut scratch, false);
                for i in 0..nx {
                    for j in 0..ny {
                        out[(bi, ci, i, j)] = buf[i * ny + j].re;
                    }
                }
            }
        }
        out
    }

    /// Adjoint of [`Fft2::inverse`]: maps a cotangent on the real grid back to
    /// a cotangent on the half spectrum.
    pub fn inverse_adjoint(&self, cotangent: &GridField) -> Result<SpectralField> {
        self.check_grid(cotangent.nx(), cotangent.ny())?;
        SpectralField::new(self.inverse_adjoint_raw(cotangent.data()))
    }

    /// Raw-array variant of [`Fft2::inverse_adjoint`]. Forward-transforms the
    /// cotangent, then folds each interior column together with its mirrored
    /// partner (which the inverse read through conjugation) and scales by
    /// `1/(nx·ny)`.
    pub fn inverse_adjoint_raw(&self, cotangent: &Array4<f64>) -> Array4<Complex64> {
        let (b, c, nx, ny) = cotangent.dim();
        debug_assert_eq!((nx, ny), (self.nx, self.ny), "unplanned resolution");
        let nyh = ny / 2 + 1;
        let norm = 1.0 / (nx * ny) as f64;
        let mut out = Array4::zeros((b, c, nx, nyh));
        let mut buf = vec![Complex64::default(); nx * ny];
        let mut tbuf = vec![Complex64::default(); nx * ny];
        let mut scratch = Vec::new();
        for bi in 0..b {
            for ci in 0..c {
                for i in 0..nx {
                    for j in 0..ny {
                        buf[i * ny + j] = Complex64::new(cotangent[(bi, ci, i, j)], 0.0);
                    }
                }
                self.c2c_2d(&mut buf, &mut tbuf, &mut scratch, true);
                for i in 0..nx {
                    for j in 0..nyh {
                        let mut v = buf[i * ny + j];
                        if j > 0 && j < ny / 2 {
                            let im = (nx - i) % nx;
                            v += buf[im * ny + (ny - j)].conj();
                        }
                        out[(bi, ci, i, j)] = v * norm;
                    }
                }
            }
        }
        out
    }
}

/// Which spatial axis of a `(B, C, nx, ny)` array a 1D transform runs along.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpatialAxis {
    X,
    Y,
}

impl SpatialAxis {
    fn index(self) -> usize {
        match self {
            SpatialAxis::X => 2,
            SpatialAxis::Y => 3,
        }
    }
}

/// Planned 1D transform along one spatial axis of a `(B, C, nx, ny)` array,
/// keeping the `n/2 + 1` nonnegative frequencies. Same normalization and
/// adjoint conventions as [`Fft2`].
pub struct AxisFft {
    axis: SpatialAxis,
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl AxisFft {
    /// Plans a transform of even length `n >= 4` along `axis`.
    pub fn new(axis: SpatialAxis, n: usize) -> Result<Self> {
        if n < 4 || n % 2 != 0 {
            return Err(Error::config(format!(
                "axis transform length {n} invalid: must be even and >= 4"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(AxisFft {
            axis,
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        })
    }

    pub fn axis(&self) -> SpatialAxis {
        self.axis
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn out_shape(&self, mut dim: (usize, usize, usize, usize), len: usize) -> (usize, usize, usize, usize) {
        match self.axis {
            SpatialAxis::X => dim.2 = len,
            SpatialAxis::Y => dim.3 = len,
        }
        dim
    }

    /// Real lanes to their `n/2 + 1` nonnegative-frequency coefficients
    /// (unnormalized).
    pub fn forward(&self, data: &Array4<f64>) -> Array4<Complex64> {
        let dim = data.dim();
        let ax = self.axis.index();
        debug_assert_eq!(data.shape()[ax], self.n, "unplanned axis length");
        let nh = self.n / 2 + 1;
        let mut out = Array4::zeros(self.out_shape(dim, nh));
        let mut buf = vec![Complex64::default(); self.n];
        let mut scratch = Vec::new();
        Zip::from(out.lanes_mut(Axis(ax)))
            .and(data.lanes(Axis(ax)))
            .for_each(|mut o, lane| {
                for (dst, src) in buf.iter_mut().zip(lane.iter()) {
                    *dst = Complex64::new(*src, 0.0);
                }
                self.fwd.process_with_scratch(&mut buf, scratch_for(&mut scratch, &self.fwd));
                for (dst, src) in o.iter_mut().zip(buf.iter().take(nh)) {
                    *dst = *src;
                }
            });
        out
    }

    /// Coefficient lanes back to real lanes of length `n`; carries `1/n` and
    /// returns the real part.
    pub fn inverse(&self, data: &Array4<Complex64>) -> Array4<f64> {
        let dim = data.dim();
        let ax = self.axis.index();
        let nh = self.n / 2 + 1;
        debug_assert_eq!(data.shape()[ax], nh, "unplanned half-axis length");
        let norm = 1.0 / self.n as f64;
        let mut out = Array4::zeros(self.out_shape(dim, self.n));
        let mut buf = vec![Complex64::default(); self.n];
        let mut scratch = Vec::new();
        Zip::from(out.lanes_mut(Axis(ax)))
            .and(data.lanes(Axis(ax)))
            .for_each(|mut o, lane| {
                for k in 0..nh {
                    buf[k] = lane[k];
                }
                for k in nh..self.n {
                    buf[k] = lane[self.n - k].conj();
                }
                self.inv.process_with_scratch(&mut buf, scratch_for(&mut scratch, &self.inv));
                for (dst, src) in o.iter_mut().zip(buf.iter()) {
                    *dst = src.re * norm;
                }
            });
        out
    }

    /// Adjoint of [`AxisFft::forward`].
    pub fn forward_adjoint(&self, cotangent: &Array4<Complex64>) -> Array4<f64> {
        let dim = cotangent.dim();
        let ax = self.axis.index();
        let nh = self.n / 2 + 1;
        debug_assert_eq!(cotangent.shape()[ax], nh, "unplanned half-axis length");
        let mut out = Array4::zeros(self.out_shape(dim, self.n));
        let mut buf = vec![Complex64::default(); self.n];
        let mut scratch = Vec::new();
        Zip::from(out.lanes_mut(Axis(ax)))
            .and(cotangent.lanes(Axis(ax)))
            .for_each(|mut o, lane| {
                for k in 0..nh {
                    buf[k] = lane[k];
                }
                for k in nh..self.n {
                    buf[k] = Complex64::default();
                }
                self.inv.process_with_scratch(&mut buf, scratch_for(&mut scratch, &self.inv));
                for (dst, src) in o.iter_mut().zip(buf.iter()) {
                    *dst = src.re;
                }
            });
        out
    }

    /// Adjoint of [`AxisFft::inverse`].
    pub fn inverse_adjoint(&self, cotangent: &Array4<f64>) -> Array4<Complex64> {
        let dim = cotangent.dim();
        let ax = self.axis.index();
        debug_assert_eq!(cotangent.shape()[ax], self.n, "unplanned axis length");
        let nh = self.n / 2 + 1;
        let norm = 1.0 / self.n as f64;
        let mut out = Array4::zeros(self.out_shape(dim, nh));
        let mut buf = vec![Complex64::default(); self.n];
        let mut scratch = Vec::new();
        Zip::from(out.lanes_mut(Axis(ax)))
            .and(cotangent.lanes(Axis(ax)))
            .for_each(|mut o, lane| {
                for (dst, src) in buf.iter_mut().zip(lane.iter()) {
                    *dst = Complex64::new(*src, 0.0);
                }
                self.fwd.process_with_scratch(&mut buf, scratch_for(&mut scratch, &self.fwd));
                for k in 0..nh {
                    let mut v = buf[k];
                    if k > 0 && k < self.n / 2 {
                        v += buf[self.n - k].conj();
                    }
                    o[k] = v * norm;
                }
            });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_grid(rng: &mut ChaCha8Rng, b: usize, c: usize, nx: usize, ny: usize) -> Array4<f64> {
        Array4::from_shape_fn((b, c, nx, ny), |_| rng.random_range(-1.0..1.0))
    }

    fn random_complex(
        rng: &mut ChaCha8Rng,
        dim: (usize, usize, usize, usize),
    ) -> Array4<Complex64> {
        Array4::from_shape_fn(dim, |_| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    /// Real pairing Re Σ a·conj(b) used by all adjoint identities.
    fn pair_cc(a: &Array4<Complex64>, b: &Array4<Complex64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x * y.conj()).re).sum()
    }

    fn pair_rr(a: &Array4<f64>, b: &Array4<f64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
    }

    /// O(N^2) direct summation of the unnormalized 2D transform, the oracle
    /// the fast path is checked against.
    fn dft2_direct(u: &Array4<f64>, bi: usize, ci: usize, kx: usize, ky: usize) -> Complex64 {
        let (_, _, nx, ny) = u.dim();
        let mut acc = Complex64::default();
        for i in 0..nx {
            for j in 0..ny {
                let phase = -2.0 * PI * (kx as f64 * i as f64 / nx as f64 + ky as f64 * j as f64 / ny as f64);
                acc += u[(bi, ci, i, j)] * Complex64::new(phase.cos(), phase.sin());
            }
        }
        acc
    }

    #[test]
    fn constant_field_concentrates_in_dc_bin() {
        let fft = Fft2::new(8, 8).unwrap();
        let u = GridField::new(Array4::from_elem((1, 1, 8, 8), 0.75)).unwrap();
        let s = fft.forward(&u).unwrap();
        let dc = s.data()[(0, 0, 0, 0)];
        assert!(
            (dc.re - 48.0).abs() < 1e-12 && dc.im.abs() < 1e-12,
            "DC bin of constant 0.75 on 8x8 should be 64*0.75 = 48, got {dc}"
        );
        for i in 0..8 {
            for j in 0..5 {
                if (i, j) != (0, 0) {
                    assert!(
                        s.data()[(0, 0, i, j)].norm() < 1e-12,
                        "non-DC bin ({i},{j}) should vanish for a constant field"
                    );
                }
            }
        }
    }

    #[test]
    fn single_cosine_and_sine_modes_land_in_the_expected_bin() {
        let (nx, ny) = (8usize, 8usize);
        let fft = Fft2::new(nx, ny).unwrap();
        let (p, q) = (2usize, 3usize);
        let phase = |i: usize, j: usize| {
            2.0 * PI * (p as f64 * i as f64 / nx as f64 + q as f64 * j as f64 / ny as f64)
        };
        let cos_u =
            GridField::new(Array4::from_shape_fn((1, 1, nx, ny), |(_, _, i, j)| phase(i, j).cos()))
                .unwrap();
        let sin_u =
            GridField::new(Array4::from_shape_fn((1, 1, nx, ny), |(_, _, i, j)| phase(i, j).sin()))
                .unwrap();
        let sc = fft.forward(&cos_u).unwrap();
        let ss = fft.forward(&sin_u).unwrap();
        let half_n = (nx * ny) as f64 / 2.0;
        let got_c = sc.data()[(0, 0, p, q)];
        let got_s = ss.data()[(0, 0, p, q)];
        assert!(
            (got_c - Complex64::new(half_n, 0.0)).norm() < 1e-10,
            "cos mode coefficient should be N/2 = {half_n}, got {got_c}"
        );
        assert!(
            (got_s - Complex64::new(0.0, -half_n)).norm() < 1e-10,
            "sin mode coefficient should be -iN/2, got {got_s}"
        );
        // Everything else in the half spectrum is zero for the cosine input.
        for i in 0..nx {
            for j in 0..=ny / 2 {
                if (i, j) != (p, q) {
                    assert!(
                        sc.data()[(0, 0, i, j)].norm() < 1e-10,
                        "unexpected energy in bin ({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn forward_matches_direct_summation_on_a_rectangular_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (nx, ny) = (4usize, 6usize);
        let u = random_grid(&mut rng, 2, 1, nx, ny);
        let fft = Fft2::new(nx, ny).unwrap();
        let s = fft.forward(&GridField::new(u.clone()).unwrap()).unwrap();
        for bi in 0..2 {
            for kx in 0..nx {
                for ky in 0..=ny / 2 {
                    let want = dft2_direct(&u, bi, 0, kx, ky);
                    let got = s.data()[(bi, 0, kx, ky)];
                    assert!(
                        (got - want).norm() < 1e-10,
                        "bin ({kx},{ky}) batch {bi}: fast {got} vs direct {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn inverse_undoes_forward_to_machine_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (nx, ny) = (16usize, 12usize);
        let u = random_grid(&mut rng, 2, 3, nx, ny);
        let fft = Fft2::new(nx, ny).unwrap();
        let round = fft
            .inverse(&fft.forward(&GridField::new(u.clone()).unwrap()).unwrap())
            .unwrap();
        let max_err = u
            .iter()
            .zip(round.data().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err < 1e-10, "round trip error {max_err} exceeds 1e-10");
    }

    #[test]
    fn energy_is_preserved_between_grid_and_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (nx, ny) = (8usize, 10usize);
        let u = random_grid(&mut rng, 1, 1, nx, ny);
        let fft = Fft2::new(nx, ny).unwrap();
        let s = fft.forward(&GridField::new(u.clone()).unwrap()).unwrap();
        let grid_energy: f64 = u.iter().map(|v| v * v).sum();
        // Interior columns stand in for their dropped conjugates, so they
        // count twice; columns 0 and ny/2 are self-paired.
        let mut spec_energy = 0.0;
        for i in 0..nx {
            for j in 0..=ny / 2 {
                let w = if j == 0 || j == ny / 2 { 1.0 } else { 2.0 };
                spec_energy += w * s.data()[(0, 0, i, j)].norm_sqr();
            }
        }
        spec_energy /= (nx * ny) as f64;
        assert!(
            (grid_energy - spec_energy).abs() < 1e-10 * grid_energy.max(1.0),
            "Parseval mismatch: grid {grid_energy} vs spectrum {spec_energy}"
        );
    }

    #[test]
    fn forward_adjoint_satisfies_the_pairing_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (nx, ny) = (8usize, 6usize);
        let fft = Fft2::new(nx, ny).unwrap();
        let u = random_grid(&mut rng, 2, 2, nx, ny);
        let g = random_complex(&mut rng, (2, 2, nx, ny / 2 + 1));
        let lhs = pair_cc(fft.forward(&GridField::new(u.clone()).unwrap()).unwrap().data(), &g);
        let rhs = pair_rr(
            &u,
            fft.forward_adjoint(&SpectralField::new(g).unwrap()).unwrap().data(),
        );
        assert!(
            (lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0),
            "<F u, g> = {lhs} but <u, F* g> = {rhs}"
        );
    }

    #[test]
    fn inverse_adjoint_satisfies_the_pairing_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let (nx, ny) = (8usize, 6usize);
        let fft = Fft2::new(nx, ny).unwrap();
        let s = random_complex(&mut rng, (1, 3, nx, ny / 2 + 1));
        let g = random_grid(&mut rng, 1, 3, nx, ny);
        let lhs = pair_rr(
            fft.inverse(&SpectralField::new(s.clone()).unwrap()).unwrap().data(),
            &g,
        );
        let rhs = pair_cc(
            &s,
            fft.inverse_adjoint(&GridField::new(g).unwrap()).unwrap().data(),
        );
        assert!(
            (lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0),
            "<F^-1 s, g> = {lhs} but <s, (F^-1)* g> = {rhs}"
        );
    }

    #[test]
    fn axis_transforms_match_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (nx, ny) = (6usize, 8usize);
        let u = random_grid(&mut rng, 1, 2, nx, ny);
        let fx = AxisFft::new(SpatialAxis::X, nx).unwrap();
        let sx = fx.forward(&u);
        for ci in 0..2 {
            for k in 0..=nx / 2 {
                for j in 0..ny {
                    let mut want = Complex64::default();
                    for i in 0..nx {
                        let ph = -2.0 * PI * (k * i) as f64 / nx as f64;
                        want += u[(0, ci, i, j)] * Complex64::new(ph.cos(), ph.sin());
                    }
                    let got = sx[(0, ci, k, j)];
                    assert!(
                        (got - want).norm() < 1e-10,
                        "x-axis bin ({k},{j}) channel {ci}: fast {got} vs direct {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn axis_round_trip_and_adjoints_hold_on_both_axes() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let (nx, ny) = (8usize, 6usize);
        for axis in [SpatialAxis::X, SpatialAxis::Y] {
            let n = match axis {
                SpatialAxis::X => nx,
                SpatialAxis::Y => ny,
            };
            let t = AxisFft::new(axis, n).unwrap();
            let u = random_grid(&mut rng, 2, 2, nx, ny);
            let round = t.inverse(&t.forward(&u));
            let max_err = u
                .iter()
                .zip(round.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(max_err < 1e-10, "axis {axis:?} round trip error {max_err}");

            let half_dim = match axis {
                SpatialAxis::X => (2, 2, nx / 2 + 1, ny),
                SpatialAxis::Y => (2, 2, nx, ny / 2 + 1),
            };
            let g = random_complex(&mut rng, half_dim);
            let lhs = pair_cc(&t.forward(&u), &g);
            let rhs = pair_rr(&u, &t.forward_adjoint(&g));
            assert!(
                (lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0),
                "axis {axis:?} forward adjoint: {lhs} vs {rhs}"
            );

            let s = random_complex(&mut rng, half_dim);
            let gr = random_grid(&mut rng, 2, 2, nx, ny);
            let lhs = pair_rr(&t.inverse(&s), &gr);
            let rhs = pair_cc(&s, &t.inverse_adjoint(&gr));
            assert!(
                (lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0),
                "axis {axis:?} inverse adjoint: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn mismatched_resolution_is_rejected() {
        let fft = Fft2::new(8, 8).unwrap();
        let u = GridField::zeros(1, 1, 8, 10).unwrap();
        assert!(
            fft.forward(&u).is_err(),
            "8x10 field must not pass through an 8x8 plan"
        );
    }
}
