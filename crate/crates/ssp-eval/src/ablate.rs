//! The component-ablation harness: trains a family of model variants under
//! one identical seed and budget, scores each with the rollout protocol,
//! and tabulates the comparison. A variant that fails to train or evaluate
//! is recorded in the table with its failure, never dropped.

use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use ssp_core::{Error, Result};
use ssp_model::{
    load_params, BackboneMode, DecoderKind, EncoderKind, Model, ModelConfig, ParamSet,
};
use ssp_pde::Dataset;
use ssp_train::{train_with_init, LossWeights, TrainConfig};

use crate::report::StepMetrics;
use crate::rollout::{rollout_eval, ModelStepper};

/// How the "without the linear backbone" variant is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackboneAblation {
    /// Drop the linear increment entirely; only the nonlinear correction
    /// advances the latent state.
    ZeroIncrement,
    /// Keep the gates but pin the temporal matrices at the identity for the
    /// whole run, so only the gate profile shapes the linear term.
    FrozenIdentityGates,
}

/// One trainable model variant of the comparison.
#[derive(Debug, Clone)]
pub struct AblationVariant {
    pub name: String,
    pub config: ModelConfig,
    pub weights: LossWeights,
    /// Parameter-slot prefixes pinned at their initial values.
    pub freeze: Vec<String>,
    /// Overwrite the temporal matrices with the exact identity before
    /// training (combined with freezing them for the pinned-identity
    /// backbone ablation).
    pub kbar_identity: bool,
}

impl AblationVariant {
    pub fn plain(name: &str, config: ModelConfig, weights: LossWeights) -> Self {
        AblationVariant {
            name: name.to_owned(),
            config,
            weights,
            freeze: Vec::new(),
            kbar_identity: false,
        }
    }
}

/// The standard remove-one-component family: no linear backbone, no gated
/// correction, no channel projectors, history stacked into channels, and a
/// fully convolutional encoder–decoder.
pub fn standard_variants(
    base: &ModelConfig,
    weights: &LossWeights,
    backbone: BackboneAblation,
) -> Vec<AblationVariant> {
    let mut wo_backbone = match backbone {
        BackboneAblation::ZeroIncrement => AblationVariant::plain(
            "wo_backbone",
            ModelConfig { backbone: BackboneMode::Identity, ..base.clone() },
            weights.clone(),
        ),
        BackboneAblation::FrozenIdentityGates => {
            let mut v = AblationVariant::plain("wo_backbone", base.clone(), weights.clone());
            v.freeze = vec!["prop.kbar".to_owned()];
            v.kbar_identity = true;
            v
        }
    };
    wo_backbone.name = "wo_backbone".to_owned();

    let wo_gate = AblationVariant::plain(
        "wo_gate",
        ModelConfig { lambda_g: 0.0, ..base.clone() },
        weights.clone(),
    );
    let wo_projectors = AblationVariant::plain(
        "wo_projectors",
        ModelConfig { c_z: base.c_s, projectors_identity: true, ..base.clone() },
        weights.clone(),
    );
    let t2c = AblationVariant::plain(
        "t2c_encoder",
        ModelConfig { encoder: EncoderKind::TimeToChannel, ..base.clone() },
        weights.clone(),
    );
    let conv = AblationVariant::plain(
        "conv_encdec",
        ModelConfig { encoder: EncoderKind::Conv, decoder: DecoderKind::Conv, ..base.clone() },
        weights.clone(),
    );
    vec![wo_backbone, wo_gate, wo_projectors, t2c, conv]
}

/// One line of the comparison table.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub variant: String,
    pub seed: u64,
    /// `"ok"`, `"diverged at step N"`, or the failure text.
    pub status: String,
    /// Time-averaged rollout metrics; absent when the variant never reached
    /// evaluation.
    pub metrics: Option<StepMetrics>,
    pub checkpoint: Option<PathBuf>,
}

/// Trains and scores the full model plus every variant, sequentially and
/// all under `train_config.seed`. Results land in `out_dir/<variant>/`; the
/// table is also written to `out_dir/ablation.csv`.
#[allow(clippy::too_many_arguments)]
pub fn ablation_run(
    train_data: &Dataset,
    eval_data: &Dataset,
    base: &ModelConfig,
    train_config: &TrainConfig,
    weights: &LossWeights,
    variants: &[AblationVariant],
    conditioning: usize,
    horizon: usize,
    out_dir: &Path,
) -> Result<Vec<AblationRow>> {
    std::fs::create_dir_all(out_dir)?;
    let mut all = Vec::with_capacity(variants.len() + 1);
    all.push(AblationVariant::plain("full", base.clone(), weights.clone()));
    all.extend(variants.iter().cloned());

    let mut rows = Vec::with_capacity(all.len());
    for variant in &all {
        rows.push(run_variant(
            variant,
            train_data,
            eval_data,
            train_config,
            conditioning,
            horizon,
            &out_dir.join(&variant.name),
        ));
    }
    write_ablation_csv(&rows, &out_dir.join("ablation.csv"))?;
    Ok(rows)
}

fn run_variant(
    variant: &AblationVariant,
    train_data: &Dataset,
    eval_data: &Dataset,
    train_config: &TrainConfig,
    conditioning: usize,
    horizon: usize,
    out_dir: &Path,
) -> AblationRow {
    let seed = train_config.seed;
    let fail = |status: String| AblationRow {
        variant: variant.name.clone(),
        seed,
        status,
        metrics: None,
        checkpoint: None,
    };
    let mut cfg = train_config.clone();
    cfg.freeze = variant.freeze.clone();

    let mut params = match ParamSet::init(&variant.config, seed) {
        Ok(p) => p,
        Err(e) => return fail(format!("initialization failed: {e}")),
    };
    if variant.kbar_identity {
        match params.kbar.as_mut() {
            Some(kbar) => {
                kbar.fill(Complex64::default());
                let (c_z, t, _) = kbar.dim();
                for l in 0..c_z {
                    for i in 0..t {
                        kbar[(l, i, i)] = Complex64::new(1.0, 0.0);
                    }
                }
            }
            None => {
                return fail("variant pins the temporal matrices but has none".to_owned());
            }
        }
    }

    let report = match train_with_init(
        train_data,
        &variant.config,
        &cfg,
        &variant.weights,
        out_dir,
        params,
    ) {
        Ok(r) => r,
        Err(e) => return fail(format!("training failed: {e}")),
    };
    let (data, trained) = match load_params(&report.final_checkpoint) {
        Ok(v) => v,
        Err(e) => return fail(format!("checkpoint reload failed: {e}")),
    };
    let model = match Model::new(data.config) {
        Ok(m) => m,
        Err(e) => return fail(format!("model construction failed: {e}")),
    };
    let eval = match rollout_eval(
        &ModelStepper { model: &model, params: &trained },
        eval_data,
        conditioning,
        horizon,
    ) {
        Ok(r) => r,
        Err(e) => return fail(format!("evaluation failed: {e}")),
    };
    let status = match eval.diverged_at {
        None => "ok".to_owned(),
        Some(step) => format!("diverged at step {step}"),
    };
    AblationRow {
        variant: variant.name.clone(),
        seed,
        status,
        metrics: Some(eval.summary),
        checkpoint: Some(report.final_checkpoint),
    }
}

/// Comparison table as CSV; failed variants keep their row with empty
/// metric columns.
pub fn write_ablation_csv(rows: &[AblationRow], path: &Path) -> Result<()> {
    let mut out = String::from("variant,status,seed,rel_l2,e_max,brms,f_low,f_mid,f_high,f_mse\n");
    for row in rows {
        let status = row.status.replace(',', ";");
        match &row.metrics {
            Some(m) => out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                row.variant, status, row.seed, m.rel_l2, m.e_max, m.brms, m.f_low, m.f_mid,
                m.f_high, m.f_mse
            )),
            None => out.push_str(&format!("{},{},{},,,,,,,\n", row.variant, status, row.seed)),
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Convenience accessor for one variant's row.
pub fn find_row<'a>(rows: &'a [AblationRow], variant: &str) -> Result<&'a AblationRow> {
    rows.iter()
        .find(|r| r.variant == variant)
        .ok_or_else(|| Error::config(format!("no ablation row named {variant:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use ssp_core::GridField;
    use ssp_pde::{generate_dataset, PdeSpec};

    fn tmp_dir(name: &str) -> PathBuf {
        let dir = std::env::temp_dir()
            .join("ssp-eval-tests")
            .join(format!("{}-{name}", std::process::id()));
        std::fs::create_dir_all(&dir).expect("temp dir is writable");
        dir
    }

    fn rd_config() -> ModelConfig {
        ModelConfig {
            d_u: 2,
            c_s: 6,
            c_z: 3,
            t: 3,
            n_full: (16, 16),
            m: (4, 4),
            ..ModelConfig::default()
        }
    }

    fn rd_dataset(name: &str, n_traj: usize, l_total: usize, seed_base: u64) -> Dataset {
        let spec = PdeSpec::default_reaction_diffusion();
        let path = tmp_dir(name).join("data.sspd");
        generate_dataset(&spec, n_traj, l_total, (16, 16), seed_base, 4.0, "train", &path)
            .unwrap()
    }

    #[test]
    fn the_standard_family_covers_every_removal() {
        let base = rd_config();
        let weights = LossWeights::default();
        let variants = standard_variants(&base, &weights, BackboneAblation::ZeroIncrement);
        let names: Vec<&str> = variants.iter().map(|v| v.name.as_str()).collect();
        assert_eq!(
            names,
            ["wo_backbone", "wo_gate", "wo_projectors", "t2c_encoder", "conv_encdec"]
        );
        for v in &variants {
            v.config.validate().unwrap_or_else(|e| {
                panic!("variant {} must be constructible: {e}", v.name)
            });
        }
        assert_eq!(variants[0].config.backbone, BackboneMode::Identity);
        assert_eq!(variants[1].config.lambda_g, 0.0);
        assert!(variants[2].config.projectors_identity);
        assert_eq!(variants[2].config.c_z, base.c_s, "identity projectors need equal widths");
        assert_eq!(variants[3].config.encoder, EncoderKind::TimeToChannel);
        assert_eq!(variants[4].config.decoder, DecoderKind::Conv);

        let frozen = standard_variants(&base, &weights, BackboneAblation::FrozenIdentityGates);
        assert_eq!(frozen[0].config.backbone, BackboneMode::Learned);
        assert!(frozen[0].kbar_identity);
        assert_eq!(frozen[0].freeze, ["prop.kbar"]);
    }

    #[test]
    fn dropping_the_correction_leaves_a_linear_propagator() {
        let config = ModelConfig { lambda_g: 0.0, ..rd_config() };
        let model = Model::new(config.clone()).unwrap();
        let params = ParamSet::init(&config, 41).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let dim = (config.t, config.c_z, 16, 16);
        let z1 = GridField::new(Array4::from_shape_fn(dim, |_| rng.random_range(-1.0..1.0)))
            .unwrap();
        let z2 = GridField::new(Array4::from_shape_fn(dim, |_| rng.random_range(-1.0..1.0)))
            .unwrap();
        let a = 0.7;
        let mixed = GridField::new(z1.data().mapv(|v| a * v) + z2.data()).unwrap();
        let out_mixed = model.propagate(&params, &mixed).unwrap().z_next;
        let out1 = model.propagate(&params, &z1).unwrap().z_next;
        let out2 = model.propagate(&params, &z2).unwrap().z_next;
        let expected = out1.data().mapv(|v| a * v) + out2.data();
        let scale = expected.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        for (m, e) in out_mixed.data().iter().zip(expected.iter()) {
            assert!(
                (m - e).abs() <= 1e-12 * scale,
                "superposition must hold without the correction term: {m} vs {e}"
            );
        }
    }

    #[test]
    fn an_empty_variant_list_tables_only_the_full_model() {
        let dataset = rd_dataset("empty-list", 1, 9, 8800);
        let config = rd_config();
        let train_config = TrainConfig {
            n_roll: 1,
            epochs: 1,
            batch_size: 1,
            checkpoint_every: 100,
            seed: 43,
            ..TrainConfig::default()
        };
        let out = tmp_dir("empty-list-out");
        let rows = ablation_run(
            &dataset,
            &dataset,
            &config,
            &train_config,
            &LossWeights::default(),
            &[],
            3,
            6,
            &out,
        )
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].variant, "full");
        assert_eq!(rows[0].status, "ok");
        assert!(rows[0].metrics.is_some());
        let csv = std::fs::read_to_string(out.join("ablation.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2, "header plus the single full-model row");
        assert_eq!(lines[1].split(',').count(), 10);
        assert!(lines[1].starts_with("full,ok,43,"));
    }

    #[test]
    fn a_failing_variant_is_tabled_and_the_run_continues() {
        let dataset = rd_dataset("partial", 1, 9, 8900);
        let config = rd_config();
        let train_config = TrainConfig {
            n_roll: 1,
            epochs: 1,
            batch_size: 1,
            checkpoint_every: 100,
            seed: 44,
            ..TrainConfig::default()
        };
        // This variant expects a 1-channel dataset and must fail on the
        // 2-channel one; the run still produces every row.
        let bad = AblationVariant::plain(
            "wrong_channels",
            ModelConfig { d_u: 1, ..config.clone() },
            LossWeights::default(),
        );
        let good = AblationVariant::plain(
            "wo_gate",
            ModelConfig { lambda_g: 0.0, ..config.clone() },
            LossWeights::default(),
        );
        let out = tmp_dir("partial-out");
        let rows = ablation_run(
            &dataset,
            &dataset,
            &config,
            &train_config,
            &LossWeights::default(),
            &[bad, good],
            3,
            6,
            &out,
        )
        .unwrap();
        assert_eq!(rows.len(), 3);
        let failed = find_row(&rows, "wrong_channels").unwrap();
        assert!(failed.status.contains("training failed"), "status: {}", failed.status);
        assert!(failed.metrics.is_none());
        assert_eq!(find_row(&rows, "wo_gate").unwrap().status, "ok");
        let csv = std::fs::read_to_string(out.join("ablation.csv")).unwrap();
        assert_eq!(csv.lines().count(), 4, "no row is dropped");
        for line in csv.lines().skip(1) {
            assert_eq!(line.split(',').count(), 10, "failed rows keep the column count: {line}");
        }
    }

    #[test]
    fn the_pinned_identity_backbone_stays_at_the_identity() {
        let dataset = rd_dataset("pinned", 1, 9, 9000);
        let config = rd_config();
        let train_config = TrainConfig {
            n_roll: 1,
            epochs: 2,
            batch_size: 1,
            checkpoint_every: 100,
            seed: 45,
            ..TrainConfig::default()
        };
        let variants =
            standard_variants(&config, &LossWeights::default(), BackboneAblation::FrozenIdentityGates);
        let out = tmp_dir("pinned-out");
        let rows = ablation_run(
            &dataset,
            &dataset,
            &config,
            &train_config,
            &LossWeights::default(),
            &variants[..1],
            3,
            6,
            &out,
        )
        .unwrap();
        let row = find_row(&rows, "wo_backbone").unwrap();
        assert_eq!(row.status, "ok");
        let (_, params) = load_params(row.checkpoint.as_ref().unwrap()).unwrap();
        let kbar = params.kbar.expect("the pinned variant keeps a learned backbone");
        let (c_z, t, _) = kbar.dim();
        for l in 0..c_z {
            for i in 0..t {
                for j in 0..t {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert_eq!(
                        kbar[(l, i, j)],
                        Complex64::new(expected, 0.0),
                        "entry ({l},{i},{j}) must stay exactly at the identity"
                    );
                }
            }
        }
    }

    #[test]
    fn the_full_model_outperforms_at_least_one_ablation() {
        let train_data = rd_dataset("compare-train", 2, 12, 9100);
        let eval_data = rd_dataset("compare-eval", 2, 9, 9200);
        let config = rd_config();
        let train_config = TrainConfig {
            n_roll: 1,
            epochs: 40,
            batch_size: 2,
            checkpoint_every: 1000,
            seed: 46,
            ..TrainConfig::default()
        };
        let weights = LossWeights::default();
        let variants = standard_variants(&config, &weights, BackboneAblation::ZeroIncrement);
        let out = tmp_dir("compare-out");
        let rows = ablation_run(
            &train_data,
            &eval_data,
            &config,
            &train_config,
            &weights,
            &variants,
            3,
            6,
            &out,
        )
        .unwrap();
        assert_eq!(rows.len(), 6);
        let full = find_row(&rows, "full").unwrap();
        assert_eq!(full.status, "ok", "the full model must train and evaluate cleanly");
        let full_err = full.metrics.unwrap().rel_l2;
        let beaten: Vec<&str> = rows
            .iter()
            .filter(|r| {
                r.variant != "full"
                    && r.metrics.map(|m| m.rel_l2 > full_err).unwrap_or(true)
            })
            .map(|r| r.variant.as_str())
            .collect();
        assert!(
            !beaten.is_empty(),
            "the full model must beat at least one ablation on rollout error; \
             full = {full_err}, rows = {rows:?}"
        );
    }
}
