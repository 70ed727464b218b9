//! Shared helpers for the unit tests in this crate: a closure-backed
//! [`DiffOp`] adapter, deterministic projection vectors for turning tensor
//! outputs into scalar losses, and pack/unpack glue between flat slices and
//! `ndarray` shapes.

use ndarray::{Array1, Array2, Array4};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use ssp_core::{DiffOp, Result};

/// Wraps a loss closure and its gradient closure as a [`DiffOp`].
pub struct FnOp<F, G> {
    pub name: &'static str,
    pub len: usize,
    pub f: F,
    pub g: G,
}

impl<F, G> DiffOp for FnOp<F, G>
where
    F: Fn(&[f64]) -> Result<f64>,
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    fn name(&self) -> &str {
        self.name
    }

    fn param_len(&self) -> usize {
        self.len
    }

    fn loss(&self, params: &[f64]) -> Result<f64> {
        (self.f)(params)
    }

    fn grad(&self, params: &[f64]) -> Result<Vec<f64>> {
        (self.g)(params)
    }
}

/// Deterministic, sign-varying weights that project a tensor output to a
/// scalar; every output entry gets a distinct nonzero coefficient so no
/// gradient path is silently dropped.
pub fn projection(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let x = i as f64;
            0.35 + 0.65 * (1.7 * x + 0.3).sin()
        })
        .collect()
}

/// Concatenates gradient pieces back into one flat vector.
pub fn pack(pieces: &[&Vec<f64>]) -> Vec<f64> {
    let mut out = Vec::new();
    for p in pieces {
        out.extend_from_slice(p);
    }
    out
}

pub fn unpack_array1(flat: &[f64]) -> Array1<f64> {
    Array1::from_vec(flat.to_vec())
}

pub fn unpack_array2(flat: &[f64], dim: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_vec(dim, flat.to_vec()).expect("flat slice matches shape")
}

pub fn unpack_array4(flat: &[f64], dim: (usize, usize, usize, usize)) -> Array4<f64> {
    Array4::from_shape_vec(dim, flat.to_vec()).expect("flat slice matches shape")
}

/// Uniformly random array in (-1, 1).
pub fn random_array4(rng: &mut ChaCha8Rng, dim: (usize, usize, usize, usize)) -> Array4<f64> {
    Array4::from_shape_fn(dim, |_| rng.random_range(-1.0..1.0))
}
