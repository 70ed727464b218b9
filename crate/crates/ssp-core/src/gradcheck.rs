//! Finite-difference verification of hand-written adjoints.
//!
//! Every differentiable operation in this workspace implements [`DiffOp`]:
//! a scalar loss over a flat parameter vector together with the gradient its
//! adjoint pass produces. [`grad_check`] probes randomly chosen coordinates
//! (or an explicit list via [`grad_check_at`]) and compares the analytic
//! gradient against the central difference `(L(p+ε) − L(p−ε)) / 2ε`. A probe
//! that encounters a non-finite loss is reported as a located failure rather
//! than an error, so a report always comes back for inspection.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A differentiable scalar-valued operation: loss and adjoint gradient over a
/// flat `f64` parameter vector. Implementations must make `grad` the exact
/// derivative of `loss` up to floating-point rounding — that claim is what the
/// checker tests.
pub trait DiffOp {
    /// Short name used in reports.
    fn name(&self) -> &str;

    /// Number of scalar parameters.
    fn param_len(&self) -> usize;

    /// Scalar loss at `params`.
    fn loss(&self, params: &[f64]) -> Result<f64>;

    /// Gradient of [`DiffOp::loss`] at `params`, same length as `params`.
    fn grad(&self, params: &[f64]) -> Result<Vec<f64>>;

    /// Human-readable label for one parameter coordinate, e.g. a tensor name
    /// plus offset. Used to localize failures.
    fn param_label(&self, index: usize) -> String {
        format!("p[{index}]")
    }
}

/// Outcome of probing one parameter coordinate.
#[derive(Debug, Clone)]
pub struct ProbeResult {
    pub index: usize,
    pub label: String,
    pub analytic: f64,
    pub numeric: f64,
    /// `|analytic − numeric| / max(|analytic|, |numeric|, 1e-6)`; infinite
    /// when a loss evaluation was non-finite.
    pub rel_err: f64,
}

/// Aggregate result of a gradient check.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub op_name: String,
    pub probes: Vec<ProbeResult>,
    pub max_rel_err: f64,
    pub tol: f64,
    pub passed: bool,
}

impl CheckReport {
    /// The probe with the largest relative error, if any probes ran.
    pub fn worst(&self) -> Option<&ProbeResult> {
        self.probes
            .iter()
            .max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }

    /// One-line summary suitable for logs.
    pub fn summary(&self) -> String {
        match self.worst() {
            Some(w) => format!(
                "{}: {} over {} probes, max rel err {:.3e} at {} (tol {:.1e})",
                self.op_name,
                if self.passed { "pass" } else { "FAIL" },
                self.probes.len(),
                self.max_rel_err,
                w.label,
                self.tol
            ),
            None => format!("{}: no probes", self.op_name),
        }
    }
}

fn validate_eps(eps: f64) -> Result<()> {
    if !(1e-7..=1e-4).contains(&eps) {
        return Err(Error::config(format!(
            "finite-difference step {eps:e} outside the reliable range [1e-7, 1e-4]"
        )));
    }
    Ok(())
}

/// Draws `count` distinct parameter indices (fewer if the operation has fewer
/// parameters), deterministically in `seed`.
pub fn random_probes(param_len: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let take = count.min(param_len);
    let mut indices: Vec<usize> = (0..param_len).collect();
    // Partial Fisher-Yates: only the prefix we keep needs shuffling.
    for i in 0..take {
        let j = rng.random_range(i..param_len);
        indices.swap(i, j);
    }
    indices.truncate(take);
    indices.sort_unstable();
    indices
}

/// Checks the adjoint gradient at `count` randomly chosen coordinates.
pub fn grad_check(
    op: &dyn DiffOp,
    params: &[f64],
    count: usize,
    eps: f64,
    tol: f64,
    seed: u64,
) -> Result<CheckReport> {
    let probes = random_probes(op.param_len(), count, seed);
    grad_check_at(op, params, &probes, eps, tol)
}

/// Checks the adjoint gradient at an explicit list of coordinates. Useful when
/// the caller wants guaranteed coverage of particular tensors.
pub fn grad_check_at(
    op: &dyn DiffOp,
    params: &[f64],
    probes: &[usize],
    eps: f64,
    tol: f64,
) -> Result<CheckReport> {
    validate_eps(eps)?;
    if params.len() != op.param_len() {
        return Err(Error::config(format!(
            "{}: got {} parameters, expected {}",
            op.name(),
            params.len(),
            op.param_len()
        )));
    }
    if let Some(&bad) = probes.iter().find(|&&i| i >= params.len()) {
        return Err(Error::config(format!(
            "{}: probe index {bad} out of range for {} parameters",
            op.name(),
            params.len()
        )));
    }

    let analytic = op.grad(params)?;
    if analytic.len() != params.len() {
        return Err(Error::config(format!(
            "{}: gradient has length {}, expected {}",
            op.name(),
            analytic.len(),
            params.len()
        )));
    }

    let mut work = params.to_vec();
    let mut results = Vec::with_capacity(probes.len());
    let mut max_rel = 0.0f64;
    for &i in probes {
        let base = work[i];
        work[i] = base + eps;
        let plus = op.loss(&work)?;
        work[i] = base - eps;
        let minus = op.loss(&work)?;
        work[i] = base;

        let (numeric, rel_err) = if plus.is_finite() && minus.is_finite() {
            let numeric = (plus - minus) / (2.0 * eps);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
            (numeric, (analytic[i] - numeric).abs() / denom)
        } else {
            (f64::NAN, f64::INFINITY)
        };
        max_rel = max_rel.max(rel_err);
        results.push(ProbeResult {
            index: i,
            label: op.param_label(i),
            analytic: analytic[i],
            numeric,
            rel_err,
        });
    }

    Ok(CheckReport {
        op_name: op.name().to_string(),
        probes: results,
        max_rel_err: max_rel,
        tol,
        passed: max_rel <= tol,
    })
}
