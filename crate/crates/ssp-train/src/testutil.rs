//! Test-only glue: a closure-backed [`DiffOp`] adapter so whole-loss
//! gradients can be run through the finite-difference checker.

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
