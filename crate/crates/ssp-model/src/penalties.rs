//! Regularization terms on the propagator: a normality penalty keeping the
//! temporal matrices close to commuting with their adjoints, and an
//! interference penalty discouraging the learned correction from aligning
//! with the linear increment.

use ndarray::{Array2, Array3, Array4};
use num_complex::Complex64;
use ssp_core::{Error, Result, RetainedBlock};

/// Stabilizer added to both norms in the interference penalty denominator.
pub const ORTH_EPS: f64 = 1e-8;

/// Mean squared Frobenius norm of the commutator `K·K^H − K^H·K` over the
/// per-channel temporal matrices. Returns the penalty and its gradient in
/// the same layout as the input (cotangent stored as `∂L/∂Re + i·∂L/∂Im`).
pub fn normality_penalty(kbar: &Array3<Complex64>) -> (f64, Array3<Complex64>) {
    let (cz, t, _) = kbar.dim();
    let mut total = 0.0;
    let mut grad = Array3::<Complex64>::zeros(kbar.dim());
    for l in 0..cz {
        let k = Array2::from_shape_fn((t, t), |(i, j)| kbar[(l, i, j)]);
        let kh = Array2::from_shape_fn((t, t), |(i, j)| k[(j, i)].conj());
        let c = k.dot(&kh) - kh.dot(&k);
        total += c.iter().map(|v| v.norm_sqr()).sum::<f64>();
        let g = c.dot(&k) - k.dot(&c);
        for i in 0..t {
            for j in 0..t {
                grad[(l, i, j)] = 4.0 / cz as f64 * g[(i, j)];
            }
        }
    }
    (total / cz as f64, grad)
}

/// Normalized squared inner product between the linear increment and the
/// correction output: `|⟨ΔK, ΔG⟩|² / ((‖ΔK‖²+ε)(‖ΔG‖²+ε))`. Always in
/// `[0, 1)`; zero when the two are orthogonal, near one when parallel.
/// Returns the penalty and the cotangents of both blocks.
pub fn orth_penalty(
    dk: &RetainedBlock,
    dg: &RetainedBlock,
    eps: f64,
) -> Result<(f64, RetainedBlock, RetainedBlock)> {
    if dk.data().dim() != dg.data().dim() {
        return Err(Error::config(format!(
            "increment blocks {:?} and {:?} do not share a shape",
            dk.data().dim(),
            dg.data().dim()
        )));
    }
    let mut z = Complex64::default();
    let mut p = eps;
    let mut q = eps;
    for (a, b) in dk.data().iter().zip(dg.data().iter()) {
        z += a * b.conj();
        p += a.norm_sqr();
        q += b.norm_sqr();
    }
    let loss = z.norm_sqr() / (p * q);
    let zsq = z.norm_sqr();
    let gk = dk
        .data()
        .iter()
        .zip(dg.data().iter())
        .map(|(a, b)| 2.0 * z / (p * q) * b - 2.0 * zsq / (p * p * q) * a)
        .collect::<Vec<_>>();
    let gg = dk
        .data()
        .iter()
        .zip(dg.data().iter())
        .map(|(a, b)| 2.0 * z.conj() / (p * q) * a - 2.0 * zsq / (p * q * q) * b)
        .collect::<Vec<_>>();
    let dim = dk.data().dim();
    let gk = Array4::from_shape_vec(dim, gk).expect("gradient matches block shape");
    let gg = Array4::from_shape_vec(dim, gg).expect("gradient matches block shape");
    Ok((loss, RetainedBlock::new(gk)?, RetainedBlock::new(gg)?))
}
