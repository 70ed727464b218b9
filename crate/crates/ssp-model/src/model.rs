//! The assembled forecasting model: encoder, channel projectors, spectral
//! propagator, and decoder, with hand-written backward passes for every
//! stage so whole rollouts can be differentiated end to end.
//!
//! A [`Model`] owns the transform plans and the retained-mode bookkeeping
//! for one configuration; parameters live separately in a [`ParamSet`] so
//! training can swap and update them freely. One `forward_step` maps a
//! window of `t` physical frames to the next `t` frames.

use ssp_core::{AxisFft, Error, Fft2, GridField, Result, RetainedBlock, RetainedSet, SpatialAxis};

use crate::config::ModelConfig;
use crate::decoder::{decode, decode_backward, DecodeCache};
use crate::encoder::{encode, encode_backward, EncodeCache};
use crate::ops::{pointwise, pointwise_backward};
use crate::params::ParamSet;
use crate::propagator::{propagate, propagate_backward, PropagateCache, PropagateOutput};

/// Plans and mode bookkeeping for one model configuration.
pub struct Model {
    config: ModelConfig,
    fx: AxisFft,
    fy: AxisFft,
    fft: Fft2,
    set: RetainedSet,
}

/// Saved state of one full forward step.
pub struct StepCache {
    pub enc: EncodeCache,
    /// Encoder output (projector input).
    pub h: GridField,
    /// Projected window (propagator input).
    pub z: GridField,
    pub prop: PropagateCache,
    /// Propagated window (inverse-projector input).
    pub z_next: GridField,
    pub dec: DecodeCache,
}

/// Result of one full forward step, with the recorded propagator increments
/// for the interference penalty.
pub struct ForwardStep {
    pub u_next: GridField,
    pub delta_k: RetainedBlock,
    pub delta_g: RetainedBlock,
    pub cache: StepCache,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (nx, ny) = config.latent_resolution();
        Ok(Model {
            fx: AxisFft::new(SpatialAxis::X, nx)?,
            fy: AxisFft::new(SpatialAxis::Y, ny)?,
            fft: Fft2::new(nx, ny)?,
            set: RetainedSet::new(nx, ny, config.m.0, config.m.1)?,
            config,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn retained_set(&self) -> &RetainedSet {
        &self.set
    }

    /// Physical frames to feature frames.
    pub fn encode(&self, params: &ParamSet, u: &GridField) -> Result<(GridField, EncodeCache)> {
        encode(&self.fx, &self.fy, &self.config, params, u)
    }

    pub fn encode_backward(
        &self,
        params: &ParamSet,
        cache: &EncodeCache,
        gh: &GridField,
        grads: &mut ParamSet,
    ) -> Result<GridField> {
        encode_backward(&self.fx, &self.fy, &self.config, params, cache, gh, grads)
    }

    /// Feature channels down to the compact propagation channels.
    pub fn project(&self, params: &ParamSet, h: &GridField) -> Result<GridField> {
        match &params.proj {
            Some(p) => GridField::new(pointwise(h.data(), &p.w, &p.b)?),
            None => Ok(h.clone()),
        }
    }

    /// Backward of [`Model::project`]; `h` is the forward input.
    pub fn project_backward(
        &self,
        params: &ParamSet,
        h: &GridField,
        gz: &GridField,
        grads: &mut ParamSet,
    ) -> Result<GridField> {
        match (&params.proj, grads.proj.as_mut()) {
            (Some(p), Some(gp)) => GridField::new(pointwise_backward(
                h.data(),
                &p.w,
                gz.data(),
                &mut gp.w,
                &mut gp.b,
            )?),
            (None, None) => Ok(gz.clone()),
            _ => Err(Error::config(
                "projector parameters and gradient buffer disagree".to_owned(),
            )),
        }
    }

    /// Compact channels back up to feature channels.
    pub fn lift(&self, params: &ParamSet, z: &GridField) -> Result<GridField> {
        match &params.lift {
            Some(p) => GridField::new(pointwise(z.data(), &p.w, &p.b)?),
            None => Ok(z.clone()),
        }
    }

    /// Backward of [`Model::lift`]; `z` is the forward input.
    pub fn lift_backward(
        &self,
        params: &ParamSet,
        z: &GridField,
        gh: &GridField,
        grads: &mut ParamSet,
    ) -> Result<GridField> {
        match (&params.lift, grads.lift.as_mut()) {
            (Some(p), Some(gp)) => GridField::new(pointwise_backward(
                z.data(),
                &p.w,
                gh.data(),
                &mut gp.w,
                &mut gp.b,
            )?),
            (None, None) => Ok(gh.clone()),
            _ => Err(Error::config(
                "inverse-projector parameters and gradient buffer disagree".to_owned(),
            )),
        }
    }

    /// Advances a latent window by one window of `t` frames.
    pub fn propagate(&self, params: &ParamSet, z: &GridField) -> Result<PropagateOutput> {
        propagate(&self.fft, &self.set, &self.config, params, z)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn propagate_backward(
        &self,
        params: &ParamSet,
        cache: &PropagateCache,
        gz_next: &GridField,
        gdelta_k: Option<&RetainedBlock>,
        gdelta_g: Option<&RetainedBlock>,
        grads: &mut ParamSet,
    ) -> Result<GridField> {
        propagate_backward(
            &self.fft,
            &self.set,
            &self.config,
            params,
            cache,
            gz_next,
            gdelta_k,
            gdelta_g,
            grads,
        )
    }

    /// Feature frames back to physical frames.
    pub fn decode(&self, params: &ParamSet, h: &GridField) -> Result<(GridField, DecodeCache)> {
        decode(&self.fx, &self.fy, &self.config, params, h)
    }

    pub fn decode_backward(
        &self,
        params: &ParamSet,
        cache: &DecodeCache,
        gu: &GridField,
        grads: &mut ParamSet,
    ) -> Result<GridField> {
        decode_backward(&self.fx, &self.fy, &self.config, params, cache, gu, grads)
    }

    /// One full step: encode, project, propagate, lift, decode. The output
    /// window is the model's prediction of the next `t` physical frames.
    pub fn forward_step(&self, params: &ParamSet, u: &GridField) -> Result<ForwardStep> {
        let (h, enc) = self.encode(params, u)?;
        let z = self.project(params, &h)?;
        let prop = self.propagate(params, &z)?;
        let h_next = self.lift(params, &prop.z_next)?;
        let (u_next, dec) = self.decode(params, &h_next)?;
        Ok(ForwardStep {
            u_next,
            delta_k: prop.delta_k,
            delta_g: prop.delta_g,
            cache: StepCache { enc, h, z, prop: prop.cache, z_next: prop.z_next, dec },
        })
    }

    /// Backward of [`Model::forward_step`]. Returns the cotangent of the
    /// input window so rollouts can chain.
    #[allow(clippy::too_many_arguments)]
    pub fn forward_step_backward(
        &self,
        params: &ParamSet,
        cache: &StepCache,
        gu_next: &GridField,
        gdelta_k: Option<&RetainedBlock>,
        gdelta_g: Option<&RetainedBlock>,
        grads: &mut ParamSet,
    ) -> Result<GridField> {
        let gh_next = self.decode_backward(params, &cache.dec, gu_next, grads)?;
        let gz_next = self.lift_backward(params, &cache.z_next, &gh_next, grads)?;
        let gz =
            self.propagate_backward(params, &cache.prop, &gz_next, gdelta_k, gdelta_g, grads)?;
        let gh = self.project_backward(params, &cache.h, &gz, grads)?;
        self.encode_backward(params, &cache.enc, &gh, grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{BackboneMode, EncoderKind, ModelConfig};
    use crate::testutil::{projection, FnOp};
    use ndarray::{Array2, Array4};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use ssp_core::grad_check;

    fn small_config() -> ModelConfig {
        ModelConfig {
            d_u: 2,
            c_s: 4,
            c_z: 3,
            t: 2,
            n_full: (8, 8),
            r: 1,
            m: (4, 3),
            n_sub: 2,
            d_tau: 0.5,
            ..ModelConfig::default()
        }
    }

    fn random_window(rng: &mut ChaCha8Rng, config: &ModelConfig) -> GridField {
        let (nx, ny) = config.n_full;
        GridField::new(Array4::from_shape_fn(
            (config.t, config.d_u, nx, ny),
            |_| rng.random_range(-1.0..1.0),
        ))
        .unwrap()
    }

    #[test]
    fn forward_step_preserves_the_window_shape() {
        for r in [1usize, 2] {
            let mut config = small_config();
            config.r = r;
            let model = Model::new(config.clone()).unwrap();
            let params = ParamSet::init(&config, 80).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(81);
            let u = random_window(&mut rng, &config);
            let step = model.forward_step(&params, &u).unwrap();
            assert_eq!(
                (step.u_next.batch(), step.u_next.channels(), step.u_next.nx(), step.u_next.ny()),
                (config.t, config.d_u, 8, 8),
                "stride {r} must map a window to a window of the same shape"
            );
            assert!(step.u_next.is_finite(), "prediction must be finite");
        }
    }

    #[test]
    fn projection_is_affine_and_constant_preserving() {
        let config = small_config();
        let model = Model::new(config.clone()).unwrap();
        let params = ParamSet::init(&config, 82).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        let (nx, ny) = config.latent_resolution();
        let dim = (config.t, config.c_s, nx, ny);
        let a = GridField::new(Array4::from_shape_fn(dim, |_| rng.random_range(-1.0..1.0))).unwrap();
        let b = GridField::new(Array4::from_shape_fn(dim, |_| rng.random_range(-1.0..1.0))).unwrap();
        // Bias cancels in project(a) + project(b) − project(a + b) − project(0).
        let sum = GridField::new(a.data() + b.data()).unwrap();
        let zero = GridField::new(Array4::zeros(dim)).unwrap();
        let pa = model.project(&params, &a).unwrap();
        let pb = model.project(&params, &b).unwrap();
        let ps = model.project(&params, &sum).unwrap();
        let p0 = model.project(&params, &zero).unwrap();
        let gap = (&(pa.data() + pb.data()) - &(ps.data() + p0.data()))
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        assert!(gap < 1e-12, "projection must be affine, additivity gap {gap}");

        let constant = GridField::new(Array4::from_shape_fn(dim, |(_, c, _, _)| c as f64 - 1.0))
            .unwrap();
        let pc = model.project(&params, &constant).unwrap();
        for ti in 0..config.t {
            for c in 0..config.c_z {
                let v0 = pc.data()[(ti, c, 0, 0)];
                for i in 0..nx {
                    for j in 0..ny {
                        assert!(
                            (pc.data()[(ti, c, i, j)] - v0).abs() < 1e-14,
                            "pointwise projection must keep constants constant"
                        );
                    }
                }
            }
        }
    }

    /// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
    fn symmetric_eigenvalues(mut g: Array2<f64>) -> Vec<f64> {
        let n = g.dim().0;
        for _ in 0..100 {
            let mut off = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        off += g[(i, j)] * g[(i, j)];
                    }
                }
            }
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if g[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = 0.5 * (g[(q, q)] - g[(p, p)]) / g[(p, q)];
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (gkp, gkq) = (g[(k, p)], g[(k, q)]);
                        g[(k, p)] = c * gkp - s * gkq;
                        g[(k, q)] = s * gkp + c * gkq;
                    }
                    for k in 0..n {
                        let (gpk, gqk) = (g[(p, k)], g[(q, k)]);
                        g[(p, k)] = c * gpk - s * gqk;
                        g[(q, k)] = s * gpk + c * gqk;
                    }
                }
            }
        }
        (0..n).map(|i| g[(i, i)]).collect()
    }

    #[test]
    fn lifted_projections_span_a_compact_channel_subspace() {
        // R(P(h)) ranges over at most c_z channel directions: the stacked
        // channel vectors of many random probes must have at most c_z
        // nonzero singular values (biases zeroed to make the map linear).
        let config = small_config();
        let model = Model::new(config.clone()).unwrap();
        let mut params = ParamSet::init(&config, 84).unwrap();
        if let Some(p) = params.proj.as_mut() {
            p.b.fill(0.0);
        }
        if let Some(p) = params.lift.as_mut() {
            p.b.fill(0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(85);
        let (nx, ny) = config.latent_resolution();
        let c_s = config.c_s;
        let mut gram = Array2::<f64>::zeros((c_s, c_s));
        let mut samples = 0usize;
        for _ in 0..6 {
            let h = GridField::new(Array4::from_shape_fn(
                (config.t, c_s, nx, ny),
                |_| rng.random_range(-1.0..1.0),
            ))
            .unwrap();
            let lifted = model.lift(&params, &model.project(&params, &h).unwrap()).unwrap();
            for ti in 0..config.t {
                for i in 0..nx {
                    for j in 0..ny {
                        for a in 0..c_s {
                            for b in 0..c_s {
                                gram[(a, b)] +=
                                    lifted.data()[(ti, a, i, j)] * lifted.data()[(ti, b, i, j)];
                            }
                        }
                        samples += 1;
                    }
                }
            }
        }
        assert!(samples > c_s, "need more probes than channels");
        let mut eigs = symmetric_eigenvalues(gram);
        eigs.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
        let scale = eigs[0].max(1e-30);
        for (i, e) in eigs.iter().enumerate() {
            let sigma_rel = (e.max(0.0) / scale).sqrt();
            if i < config.c_z {
                assert!(sigma_rel > 1e-8, "direction {i} should be excited, got {sigma_rel}");
            } else {
                assert!(
                    sigma_rel < 1e-10,
                    "direction {i} exceeds the compact channel count, σ/σ₀ = {sigma_rel}"
                );
            }
        }
    }

    #[test]
    fn init_step_is_pure_autoencoding_under_identity_backbone() {
        let mut config = small_config();
        config.backbone = BackboneMode::Identity;
        let model = Model::new(config.clone()).unwrap();
        let params = ParamSet::init(&config, 86).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(87);
        let u = random_window(&mut rng, &config);
        let step = model.forward_step(&params, &u).unwrap();
        // With the closure output layer zero-initialized and the backbone
        // the identity, the propagator is an exact fixed point, so the step
        // reduces to decode(lift(project(encode(u)))).
        let (h, _) = model.encode(&params, &u).unwrap();
        let z = model.project(&params, &h).unwrap();
        let h2 = model.lift(&params, &z).unwrap();
        let (u_ae, _) = model.decode(&params, &h2).unwrap();
        let gap = (step.u_next.data() - u_ae.data())
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        assert!(gap < 1e-12, "initialized identity-backbone step must autoencode, gap {gap}");
    }

    #[test]
    fn propagate_ignores_closure_hidden_weights_at_init() {
        let config = small_config();
        let model = Model::new(config.clone()).unwrap();
        let params = ParamSet::init(&config, 88).unwrap();
        let mut reshuffled = params.clone();
        // Scramble the closure's hidden layer; with the zero output layer
        // the correction stays zero, so nothing downstream may change.
        let mut rng = ChaCha8Rng::seed_from_u64(89);
        reshuffled.closure1.w.mapv_inplace(|v| v + rng.random_range(-1.0..1.0));
        reshuffled.closure1.b.mapv_inplace(|v| v + rng.random_range(-1.0..1.0));
        let u = random_window(&mut rng, &config);
        let a = model.forward_step(&params, &u).unwrap();
        let b = model.forward_step(&reshuffled, &u).unwrap();
        let gap = (a.u_next.data() - b.u_next.data())
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        assert!(gap == 0.0, "hidden closure weights must be inert at init, gap {gap}");
    }

    #[test]
    fn forward_step_gradients_match_finite_differences() {
        let config = ModelConfig {
            d_u: 1,
            c_s: 4,
            c_z: 2,
            t: 2,
            n_full: (8, 8),
            r: 2,
            m: (2, 2),
            n_sub: 1,
            d_tau: 1.0,
            ..ModelConfig::default()
        };
        let layout = crate::params::Layout::of(&config).unwrap();
        let template = ParamSet::init(&config, 90).unwrap();
        let n_p = layout.total;
        let (fnx, fny) = config.n_full;
        let n_u = config.t * config.d_u * fnx * fny;
        let proj = projection(n_u);
        let eval = {
            let config = config.clone();
            let template = template.clone();
            move |p: &[f64]| -> Result<(Model, ParamSet, GridField)> {
                let model = Model::new(config.clone())?;
                let mut params = template.clone();
                params.from_flat(&p[..n_p])?;
                let u = GridField::new(
                    Array4::from_shape_vec((config.t, config.d_u, fnx, fny), p[n_p..].to_vec())
                        .expect("flat window matches shape"),
                )?;
                Ok((model, params, u))
            }
        };
        let op = FnOp {
            name: "forward step",
            len: n_p + n_u,
            f: {
                let eval = eval.clone();
                let proj = proj.clone();
                move |p: &[f64]| {
                    let (model, params, u) = eval(p)?;
                    let step = model.forward_step(&params, &u)?;
                    Ok(step.u_next.data().iter().zip(proj.iter()).map(|(a, b)| a * b).sum())
                }
            },
            g: {
                let eval = eval.clone();
                let config = config.clone();
                move |p: &[f64]| {
                    let (model, params, u) = eval(p)?;
                    let step = model.forward_step(&params, &u)?;
                    let gu_next = GridField::new(
                        Array4::from_shape_vec((config.t, config.d_u, fnx, fny), proj.clone())
                            .expect("projection matches output shape"),
                    )?;
                    let mut grads = ParamSet::zeros(&config)?;
                    let gu = model.forward_step_backward(
                        &params,
                        &step.cache,
                        &gu_next,
                        None,
                        None,
                        &mut grads,
                    )?;
                    let mut flat = grads.to_flat();
                    flat.extend(gu.data().iter());
                    Ok(flat)
                }
            },
        };
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        let mut start = template.to_flat();
        start.extend((0..n_u).map(|_| rng.random_range(-1.0..1.0)));
        let report = grad_check(&op, &start, 80, 1e-6, 1e-5, 26).unwrap();
        assert!(report.passed, "{}", report.summary());
    }

    #[test]
    fn forward_step_rejects_the_wrong_window_shape() {
        let config = small_config();
        let model = Model::new(config.clone()).unwrap();
        let params = ParamSet::init(&config, 92).unwrap();
        let bad = GridField::new(Array4::zeros((config.t, config.d_u, 8, 6))).unwrap();
        assert!(
            model.forward_step(&params, &bad).is_err(),
            "a mis-sized window must be rejected"
        );
    }

    #[test]
    fn stacked_encoder_feeds_the_full_pipeline() {
        let mut config = small_config();
        config.encoder = EncoderKind::TimeToChannel;
        let model = Model::new(config.clone()).unwrap();
        let params = ParamSet::init(&config, 93).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(94);
        let u = random_window(&mut rng, &config);
        let step = model.forward_step(&params, &u).unwrap();
        assert!(step.u_next.is_finite());
        assert_eq!(step.u_next.data().dim(), u.data().dim());
    }
}
