//! The composite rollout training objective and its hand-written backward
//! pass.
//!
//! One evaluation consumes a ground-truth window of at least
//! `(n_roll + 1) · t` frames. The first `t`-frame window seeds the rollout;
//! after that the model's own predictions are fed back as inputs, so
//! gradients flow through the whole recursive chain, including the
//! re-encoding of every prediction. Latent supervision compares each
//! propagator output against the projected encoding of the matching truth
//! window, and that target path is differentiated too — the target is not
//! detached. The backward pass therefore cannot reuse the model's one-shot
//! step adjoint: the latent cotangent has to enter between the propagator
//! and the inverse projector, so the chain is unwound stage by stage.

use ndarray::{s, Array4, Zip};
use ssp_core::{Error, GridField, Result, RetainedBlock};
use ssp_model::{normality_penalty, orth_penalty, Model, ParamSet, ORTH_EPS};

use crate::config::LossWeights;

/// Raw (unweighted) values of every loss term from one window evaluation.
/// The per-rollout-step terms keep one entry per step, in step order.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    /// Autoencoding error on the input window.
    pub rec: f64,
    /// Propagator output vs projected encoding of the truth, per step.
    pub lat: Vec<f64>,
    /// Prediction vs truth in the physical field, per step.
    pub phy: Vec<f64>,
    /// Commutator penalty of the temporal matrices.
    pub norm: f64,
    /// Backbone/closure interference score, per step.
    pub orth: Vec<f64>,
    /// The weighted combination actually optimized; equals
    /// [`LossBreakdown::weighted_total`] under the weights it was built with.
    pub total: f64,
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

impl LossBreakdown {
    pub fn mean_lat(&self) -> f64 {
        mean(&self.lat)
    }

    pub fn mean_phy(&self) -> f64 {
        mean(&self.phy)
    }

    pub fn mean_orth(&self) -> f64 {
        mean(&self.orth)
    }

    /// Recombines the stored components: reconstruction and the normality
    /// penalty enter once, the rollout terms enter as averages over steps.
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        let n = self.lat.len().max(1) as f64;
        let mut roll = 0.0;
        for r in 0..self.lat.len() {
            roll += w.lat * self.lat[r] + w.phy * self.phy[r];
        }
        let orth_sum: f64 = self.orth.iter().sum();
        w.rec * self.rec + roll / n + w.norm * self.norm + w.orth * orth_sum / n
    }
}

/// Sum of squared entry differences (a squared Frobenius distance).
fn sq_diff(a: &Array4<f64>, b: &Array4<f64>) -> f64 {
    debug_assert_eq!(a.dim(), b.dim(), "squared distance needs matching shapes");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// `scale · (a − b)`, the cotangent of a squared distance.
fn scaled_diff(a: &Array4<f64>, b: &Array4<f64>, scale: f64) -> Array4<f64> {
    let mut out = a - b;
    out.mapv_inplace(|v| v * scale);
    out
}

fn scale_block(block: &RetainedBlock, scale: f64) -> Result<RetainedBlock> {
    RetainedBlock::new(block.data().mapv(|v| v * scale))
}

/// Frames `r·t .. (r+1)·t` of a ground-truth window.
fn window_frames(window: &GridField, r: usize, t: usize) -> Result<GridField> {
    GridField::new(window.data().slice(s![r * t..(r + 1) * t, .., .., ..]).to_owned())
}

fn at_step(e: Error, step: usize) -> Error {
    match e {
        Error::Divergence(msg) => Error::divergence(format!("rollout step {step}: {msg}")),
        other => other,
    }
}

/// Evaluates the full training objective on one ground-truth window and,
/// when a gradient accumulator is supplied, adds the exact parameter
/// gradient of the weighted total into it.
///
/// `window` must hold at least `(n_roll + 1) · t` frames; extra frames are
/// ignored. With `rec_through_projectors` the reconstruction branch routes
/// through the projector pair (`decode(lift(project(encode(u))))`) instead
/// of decoding the encoder output directly.
pub fn rollout_loss(
    model: &Model,
    params: &ParamSet,
    window: &GridField,
    weights: &LossWeights,
    n_roll: usize,
    rec_through_projectors: bool,
    grads: Option<&mut ParamSet>,
) -> Result<LossBreakdown> {
    weights.validate()?;
    if n_roll == 0 {
        return Err(Error::config("rollout needs at least one step"));
    }
    let t = model.config().t;
    let needed = (n_roll + 1) * t;
    if window.batch() < needed {
        return Err(Error::config(format!(
            "window holds {} frames, a {n_roll}-step rollout of {t}-frame windows needs {needed}",
            window.batch()
        )));
    }

    let u0 = window_frames(window, 0, t)?;

    // The rollout chain, feeding each prediction back in as the next input.
    let mut steps = Vec::with_capacity(n_roll);
    let mut truths = Vec::with_capacity(n_roll);
    let mut u_cur = u0.clone();
    for r in 0..n_roll {
        let step = model.forward_step(params, &u_cur).map_err(|e| at_step(e, r + 1))?;
        if !step.u_next.is_finite() {
            return Err(Error::divergence(format!(
                "rollout step {}: prediction contains non-finite values",
                r + 1
            )));
        }
        u_cur = step.u_next.clone();
        truths.push(window_frames(window, r + 1, t)?);
        steps.push(step);
    }

    // Latent targets: projected encodings of the matching truth windows,
    // kept with their caches because the target path carries gradient.
    let mut targets = Vec::with_capacity(n_roll);
    for truth in &truths {
        let (h_star, enc_star) = model.encode(params, truth)?;
        let z_star = model.project(params, &h_star)?;
        targets.push((h_star, enc_star, z_star));
    }

    // The reconstruction branch reuses the chain's first encoding (and,
    // when routed through the projectors, its first projection).
    let first = &steps[0].cache;
    let (u_rec, dec_rec) = if rec_through_projectors {
        let lifted = model.lift(params, &first.z)?;
        model.decode(params, &lifted)?
    } else {
        model.decode(params, &first.h)?
    };

    let rec = sq_diff(u0.data(), u_rec.data());
    let mut lat = Vec::with_capacity(n_roll);
    let mut phy = Vec::with_capacity(n_roll);
    let mut orth = Vec::with_capacity(n_roll);
    let mut orth_grads = Vec::with_capacity(n_roll);
    for r in 0..n_roll {
        let l_lat = sq_diff(steps[r].cache.z_next.data(), targets[r].2.data());
        let l_phy = sq_diff(steps[r].u_next.data(), truths[r].data());
        let (l_orth, gdk, gdg) = orth_penalty(&steps[r].delta_k, &steps[r].delta_g, ORTH_EPS)?;
        if !(l_lat.is_finite() && l_phy.is_finite() && l_orth.is_finite()) {
            return Err(Error::divergence(format!(
                "rollout step {}: loss overflowed to a non-finite value",
                r + 1
            )));
        }
        lat.push(l_lat);
        phy.push(l_phy);
        orth.push(l_orth);
        orth_grads.push((gdk, gdg));
    }
    let (norm, norm_grad) = match params.kbar.as_ref() {
        Some(kbar) => {
            let (value, grad) = normality_penalty(kbar);
            (value, Some(grad))
        }
        None => (0.0, None),
    };

    let mut breakdown = LossBreakdown { rec, lat, phy, norm, orth, total: 0.0 };
    breakdown.total = breakdown.weighted_total(weights);
    if !breakdown.total.is_finite() {
        return Err(Error::divergence("total loss is non-finite".to_owned()));
    }

    let Some(grads) = grads else {
        return Ok(breakdown);
    };

    let inv_n = 1.0 / n_roll as f64;

    // The normality penalty acts on the temporal matrices directly.
    if let (Some(g), Some(acc)) = (norm_grad.as_ref(), grads.kbar.as_mut()) {
        Zip::from(acc).and(g).for_each(|a, v| *a += *v * weights.norm);
    }

    // Reconstruction branch, unwound to its contribution at the shared
    // first encoding (or first projection).
    let gu_rec = GridField::new(scaled_diff(u_rec.data(), u0.data(), 2.0 * weights.rec))?;
    let gh_rec = model.decode_backward(params, &dec_rec, &gu_rec, grads)?;
    let (extra_h0, extra_z0) = if rec_through_projectors {
        let gz = model.lift_backward(params, &first.z, &gh_rec, grads)?;
        (None, Some(gz))
    } else {
        (Some(gh_rec), None)
    };

    // Unwind the chain newest step first; `gu_feedback` carries the
    // cotangent each step sends back into the prediction it consumed.
    let mut gu_feedback: Option<Array4<f64>> = None;
    for r in (0..n_roll).rev() {
        let step = &steps[r];
        let scale_lat = 2.0 * weights.lat * inv_n;

        let mut gu_next =
            scaled_diff(step.u_next.data(), truths[r].data(), 2.0 * weights.phy * inv_n);
        if let Some(fb) = gu_feedback.take() {
            gu_next += &fb;
        }
        let gh_next =
            model.decode_backward(params, &step.cache.dec, &GridField::new(gu_next)?, grads)?;
        let mut gz_next = model.lift_backward(params, &step.cache.z_next, &gh_next, grads)?;
        // The latent cotangent enters between the propagator and the
        // inverse projector.
        Zip::from(gz_next.data_mut())
            .and(step.cache.z_next.data())
            .and(targets[r].2.data())
            .for_each(|g, zt, zs| *g += scale_lat * (zt - zs));

        let gdk = scale_block(&orth_grads[r].0, weights.orth * inv_n)?;
        let gdg = scale_block(&orth_grads[r].1, weights.orth * inv_n)?;
        let mut gz_in = model.propagate_backward(
            params,
            &step.cache.prop,
            &gz_next,
            Some(&gdk),
            Some(&gdg),
            grads,
        )?;
        if r == 0 {
            if let Some(extra) = extra_z0.as_ref() {
                *gz_in.data_mut() += extra.data();
            }
        }
        let mut gh = model.project_backward(params, &step.cache.h, &gz_in, grads)?;
        if r == 0 {
            if let Some(extra) = extra_h0.as_ref() {
                *gh.data_mut() += extra.data();
            }
        }
        let gu = model.encode_backward(params, &step.cache.enc, &gh, grads)?;
        if r > 0 {
            gu_feedback = Some(gu.into_inner());
        }

        // Target path: the mirrored latent cotangent reaches the encoder and
        // projector through the truth encoding. The truth frames themselves
        // are data, so their cotangent is dropped.
        if weights.lat != 0.0 {
            let gz_star = GridField::new(scaled_diff(
                targets[r].2.data(),
                step.cache.z_next.data(),
                scale_lat,
            ))?;
            let gh_star = model.project_backward(params, &targets[r].0, &gz_star, grads)?;
            let _ = model.encode_backward(params, &targets[r].1, &gh_star, grads)?;
        }
    }

    Ok(breakdown)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::FnOp;
    use ndarray::Array4;
    use num_complex::Complex64;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use ssp_core::grad_check;
    use ssp_model::{BackboneMode, Layout, ModelConfig};

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            d_u: 1,
            c_s: 3,
            c_z: 2,
            t: 2,
            n_full: (8, 8),
            r: 1,
            m: (2, 2),
            n_sub: 1,
            d_tau: 1.0,
            ..ModelConfig::default()
        }
    }

    fn random_window(config: &ModelConfig, n_roll: usize, seed: u64) -> GridField {
        let (nx, ny) = config.n_full;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GridField::new(Array4::from_shape_fn(
            ((n_roll + 1) * config.t, config.d_u, nx, ny),
            |_| rng.random_range(-1.0..1.0),
        ))
        .unwrap()
    }

    #[test]
    fn total_is_the_weighted_sum_of_components() {
        let config = tiny_config();
        let model = Model::new(config.clone()).unwrap();
        let params = ParamSet::init(&config, 110).unwrap();
        let window = random_window(&config, 2, 111);
        let weights = LossWeights::default();
        let breakdown =
            rollout_loss(&model, &params, &window, &weights, 2, false, None).unwrap();

        for (name, v) in [("rec", breakdown.rec), ("norm", breakdown.norm)] {
            assert!(v >= 0.0 && v.is_finite(), "{name} must be a finite nonnegative value, got {v}");
        }
        assert_eq!(breakdown.lat.len(), 2, "one latent term per rollout step");
        assert_eq!(breakdown.phy.len(), 2);
        assert_eq!(breakdown.orth.len(), 2);

        // Recompute the combination with a different association order.
        let mut recomputed = weights.norm * breakdown.norm + weights.rec * breakdown.rec;
        for r in (0..2).rev() {
            recomputed += (weights.lat * breakdown.lat[r]
                + weights.phy * breakdown.phy[r]
                + weights.orth * breakdown.orth[r])
                / 2.0;
        }
        let scale = breakdown.total.abs().max(1.0);
        assert!(
            (breakdown.total - recomputed).abs() <= 1e-12 * scale,
            "assembled total {} must match the recombined components {}",
            breakdown.total,
            recomputed
        );

        // The commutator penalty reported is exactly the raw penalty value.
        let (norm_value, _) = normality_penalty(params.kbar.as_ref().unwrap());
        assert_eq!(breakdown.norm, norm_value, "norm component is the unweighted penalty");
    }

    #[test]
    fn zeroing_the_latent_weight_removes_those_terms_exactly() {
        let config = tiny_config();
        let model = Model::new(config.clone()).unwrap();
        let params = ParamSet::init(&config, 112).unwrap();
        let window = random_window(&config, 2, 113);
        let weights = LossWeights { lat: 0.0, ..LossWeights::default() };
        let b = rollout_loss(&model, &params, &window, &weights, 2, false, None).unwrap();
        assert!(b.lat.iter().all(|&v| v > 0.0), "latent values are still reported");

        // Mirror the combiner with the latent terms dropped outright; the
        // totals must agree bit for bit.
        let n = b.lat.len() as f64;
        let mut roll = 0.0;
        for r in 0..b.phy.len() {
            roll += weights.phy * b.phy[r];
        }
        let orth_sum: f64 = b.orth.iter().sum();
        let without_lat =
            weights.rec * b.rec + roll / n + weights.norm * b.norm + weights.orth * orth_sum / n;
        assert_eq!(b.total, without_lat, "a zero weight must erase the term exactly");
    }

    #[test]
    fn identity_pipeline_on_a_constant_trajectory_scores_zero() {
        // Hand-built exact autoencoder: the lift conv is a center tap into
        // channel 0, residual blocks have zero weights (exact identities),
        // both attention gates sit at exactly 1/2 (zeroed MLPs), and the
        // readout weight 4 cancels the two gates. With the identity backbone
        // and zero closure the propagator is a fixed point, so on a
        // constant-in-time trajectory every loss term vanishes.
        let config = ModelConfig {
            d_u: 1,
            c_s: 2,
            c_z: 2,
            t: 2,
            n_full: (8, 8),
            r: 1,
            m: (4, 3),
            backbone: BackboneMode::Identity,
            projectors_identity: true,
            use_coords: false,
            ..ModelConfig::default()
        };
        let model = Model::new(config.clone()).unwrap();
        let mut params = ParamSet::zeros(&config).unwrap();
        params.enc_lift.w[(0, 0, 1, 1)] = 1.0;
        params.dec_read.w[(0, 0)] = 4.0;

        let pattern = |i: usize, j: usize| (0.3 * i as f64 - 0.7 * j as f64).sin() + 0.25;
        let window = GridField::new(Array4::from_shape_fn((4, 1, 8, 8), |(_, _, i, j)| {
            pattern(i, j)
        }))
        .unwrap();

        let breakdown = rollout_loss(
            &model,
            &params,
            &window,
            &LossWeights::default(),
            1,
            false,
            None,
        )
        .unwrap();
        assert_eq!(breakdown.rec, 0.0, "the handcrafted autoencoder is exact");
        assert!(
            breakdown.lat[0] < 1e-24,
            "latent term only carries transform round-off, got {}",
            breakdown.lat[0]
        );
        assert!(
            breakdown.phy[0] < 1e-24,
            "physical term only carries transform round-off, got {}",
            breakdown.phy[0]
        );
        assert_eq!(breakdown.norm, 0.0, "no temporal matrices under the identity backbone");
        assert_eq!(breakdown.orth[0], 0.0, "both increments vanish, so interference is zero");
    }

    #[test]
    fn interference_terms_use_each_steps_recorded_increments() {
        // Single retained mode, two substeps: replay the chain by hand and
        // recompute the interference score of every step's recorded
        // increment pair with a plain loop.
        let config = ModelConfig {
            m: (1, 1),
            n_sub: 2,
            d_tau: 0.5,
            ..tiny_config()
        };
        let model = Model::new(config.clone()).unwrap();
        let mut params = ParamSet::init(&config, 114).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(115);
        // Wake the closure up so its increment is nonzero.
        params.closure2.w.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        params.closure2.b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        let window = random_window(&config, 2, 116);

        let mut manual = Vec::new();
        let mut u_cur = window_frames(&window, 0, config.t).unwrap();
        for _ in 0..2 {
            let step = model.forward_step(&params, &u_cur).unwrap();
            u_cur = step.u_next.clone();
            let mut dot = Complex64::new(0.0, 0.0);
            let mut nk = 0.0;
            let mut ng = 0.0;
            for (k, g) in step.delta_k.data().iter().zip(step.delta_g.data().iter()) {
                dot += k * g.conj();
                nk += k.norm_sqr();
                ng += g.norm_sqr();
            }
            manual.push(dot.norm_sqr() / ((nk + 1e-8) * (ng + 1e-8)));
        }

        let breakdown = rollout_loss(
            &model,
            &params,
            &window,
            &LossWeights::default(),
            2,
            false,
            None,
        )
        .unwrap();
        for r in 0..2 {
            assert!(manual[r] > 0.0, "step {r} should have live increments");
            assert!(
                (breakdown.orth[r] - manual[r]).abs() <= 1e-12 * manual[r].max(1e-30),
                "step {r}: reported {} vs recomputed {}",
                breakdown.orth[r],
                manual[r]
            );
        }
    }

    #[test]
    fn reconstruction_routing_flag_switches_the_branch() {
        let config = tiny_config();
        let model = Model::new(config.clone()).unwrap();
        let params = ParamSet::init(&config, 117).unwrap();
        let window = random_window(&config, 1, 118);
        let weights = LossWeights::default();
        let plain =
            rollout_loss(&model, &params, &window, &weights, 1, false, None).unwrap();
        let routed = rollout_loss(&model, &params, &window, &weights, 1, true, None).unwrap();

        let u0 = window_frames(&window, 0, config.t).unwrap();
        let (h, _) = model.encode(&params, &u0).unwrap();
        let (direct, _) = model.decode(&params, &h).unwrap();
        assert_eq!(
            plain.rec,
            sq_diff(u0.data(), direct.data()),
            "plain branch decodes the encoder output"
        );
        let z = model.project(&params, &h).unwrap();
        let lifted = model.lift(&params, &z).unwrap();
        let (through, _) = model.decode(&params, &lifted).unwrap();
        assert_eq!(
            routed.rec,
            sq_diff(u0.data(), through.data()),
            "routed branch goes through the projector pair"
        );
        assert_ne!(plain.rec, routed.rec, "the two routings should differ at random init");
        assert_eq!(plain.phy, routed.phy, "rollout terms ignore the routing flag");
    }

    #[test]
    fn gradients_match_finite_differences_through_the_rollout() {
        for (probes, through, seed) in [(70, false, 119u64), (40, true, 120)] {
            let config = tiny_config();
            let template = ParamSet::init(&config, seed).unwrap();
            let layout = Layout::of(&config).unwrap();
            let window = random_window(&config, 2, seed + 100);
            let weights = LossWeights::default();

            let op = FnOp {
                name: "rollout loss",
                len: layout.total,
                f: {
                    let (cfg, template_c, window_c, weights_c) =
                        (config.clone(), template.clone(), window.clone(), weights.clone());
                    move |p: &[f64]| {
                        let model = Model::new(cfg.clone())?;
                        let mut params = template_c.clone();
                        params.from_flat(p)?;
                        Ok(rollout_loss(&model, &params, &window_c, &weights_c, 2, through, None)?
                            .total)
                    }
                },
                g: {
                    let (cfg, template_c, window_c, weights_c) =
                        (config.clone(), template.clone(), window.clone(), weights.clone());
                    move |p: &[f64]| {
                        let model = Model::new(cfg.clone())?;
                        let mut params = template_c.clone();
                        params.from_flat(p)?;
                        let mut grads = ParamSet::zeros(&cfg)?;
                        rollout_loss(
                            &model,
                            &params,
                            &window_c,
                            &weights_c,
                            2,
                            through,
                            Some(&mut grads),
                        )?;
                        Ok(grads.to_flat())
                    }
                },
            };
            let report =
                grad_check(&op, &template.to_flat(), probes, 1e-5, 1e-4, seed + 200).unwrap();
            assert!(report.passed, "routing through projectors = {through}: {}", report.summary());
        }
    }

    #[test]
    fn a_poisoned_input_names_the_rollout_step() {
        let config = tiny_config();
        let model = Model::new(config.clone()).unwrap();
        let params = ParamSet::init(&config, 121).unwrap();
        let mut window = random_window(&config, 2, 122);
        window.data_mut()[(0, 0, 3, 3)] = f64::NAN;
        let err = rollout_loss(
            &model,
            &params,
            &window,
            &LossWeights::default(),
            2,
            false,
            None,
        )
        .unwrap_err();
        match err {
            Error::Divergence(msg) => assert!(
                msg.contains("rollout step 1"),
                "divergence should name the step, got {msg:?}"
            ),
            other => panic!("expected a divergence error, got {other:?}"),
        }
    }

    #[test]
    fn short_windows_are_rejected() {
        let config = tiny_config();
        let model = Model::new(config.clone()).unwrap();
        let params = ParamSet::init(&config, 123).unwrap();
        let window = random_window(&config, 1, 124);
        let err = rollout_loss(
            &model,
            &params,
            &window,
            &LossWeights::default(),
            2,
            false,
            None,
        )
        .unwrap_err();
        assert!(
            matches!(err, Error::Config(_)),
            "a window too short for the rollout must be a configuration error, got {err:?}"
        );
    }
}
