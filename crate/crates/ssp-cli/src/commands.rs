//! The five subcommand bodies. Each takes an already-validated [`RunConfig`]
//! whose output directory is locked, performs its work, and reports to
//! stdout; errors bubble up to the exit-code mapping in `lib.rs`.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use ssp_core::{grad_check_at, CheckReport, Error, GridField, Result};
use ssp_eval::{
    ablation_run, eval_checkpoint, extrapolation_eval, standard_variants, write_ablation_csv,
    MetricsReport, ModelStepper, OracleStepper,
};
use ssp_model::{load_params, Layout, Model, ModelConfig, ParamSet};
use ssp_pde::{generate_dataset, load_dataset, Dataset};
use ssp_train::{train, train_resumed, TrainReport};

use crate::config::{parse_backbone_style, RunConfig};
use crate::plot::write_plot;
use crate::probes::{stratified_probes, synthetic_window, RolloutLossOp};

/// Generates a dataset, prints its checksum and the header metadata.
pub fn cmd_gen(config: &RunConfig) -> Result<()> {
    let spec = config.need_pde()?.to_spec()?;
    let data = config.need_data()?;
    let seed_base = data.seed_base.unwrap_or(config.seed);
    let path = config.resolve(&data.path);
    let dataset = generate_dataset(
        &spec,
        data.n_traj,
        data.l_total,
        (data.resolution[0], data.resolution[1]),
        seed_base,
        data.decay,
        &data.split,
        &path,
    )?;
    println!("wrote {}", path.display());
    println!("sha256 {}", file_sha256(&path)?);
    println!(
        "kind={} n_traj={} l_total={} resolution={}x{} channels={} split={} decay={} seed_base={}",
        dataset.spec.kind.tag(),
        dataset.n_traj(),
        dataset.l_total(),
        dataset.resolution().0,
        dataset.resolution().1,
        dataset.channels(),
        dataset.split,
        dataset.decay,
        seed_base,
    );
    Ok(())
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    Ok(hex)
}

/// Loads the model description, filling omitted fields from the dataset.
fn model_for(config: &RunConfig, dataset: &Dataset) -> Result<ModelConfig> {
    config
        .need_model()?
        .to_model_config(Some(dataset.channels()), Some(dataset.resolution()))
}

/// Trains (or resumes) and reports the checkpoint and log locations.
pub fn cmd_train(config: &RunConfig) -> Result<TrainReport> {
    let section = config.need_train()?;
    let dataset = load_dataset(&config.resolve(&section.dataset))?;
    let train_config = section.to_train_config(config.seed)?;
    let weights = config.weights()?;
    let report = match &section.resume {
        Some(checkpoint) => {
            let from = config.resolve(checkpoint);
            println!("resuming from {}", from.display());
            train_resumed(&dataset, &train_config, &weights, &config.out, &from)?
        }
        None => {
            let model_config = model_for(config, &dataset)?;
            train(&dataset, &model_config, &train_config, &weights, &config.out)?
        }
    };
    if let Some(last) = report.history.last() {
        println!(
            "epoch {} total {:.6e} (rec {:.3e} lat {:.3e} phy {:.3e} norm {:.3e} orth {:.3e})",
            last.epoch, last.total, last.rec, last.lat, last.phy, last.norm, last.orth
        );
    }
    println!("checkpoint {}", report.final_checkpoint.display());
    println!("log {}", report.log_path.display());
    Ok(report)
}

/// Evaluates a checkpoint (or the ground-truth stub) and writes the metric
/// curves as CSV, optionally with an SVG plot.
pub fn cmd_eval(config: &RunConfig) -> Result<MetricsReport> {
    let section = config.need_eval()?;
    let dataset = load_dataset(&config.resolve(&section.dataset))?;
    let report = if section.oracle {
        let t = oracle_window_len(config, section.checkpoint.as_deref())?;
        let stepper = OracleStepper::new(&dataset, section.conditioning, t);
        extrapolation_eval(
            &stepper,
            &dataset,
            section.conditioning,
            section.supervised_horizon,
            section.horizon,
        )?
    } else {
        let checkpoint = section
            .checkpoint
            .as_ref()
            .ok_or_else(|| Error::config("[eval] needs a checkpoint unless oracle = true"))?;
        let path = config.resolve(checkpoint);
        if section.supervised_horizon == 0 {
            eval_checkpoint(&path, &dataset, section.conditioning, section.horizon)?
        } else {
            let (data, params) = load_params(&path)?;
            let model = Model::new(data.config)?;
            extrapolation_eval(
                &ModelStepper { model: &model, params: &params },
                &dataset,
                section.conditioning,
                section.supervised_horizon,
                section.horizon,
            )?
        }
    };
    let csv_path = config.out.join("metrics.csv");
    report.write_csv(&csv_path)?;
    println!(
        "steps {}..{} over {} samples: rel_l2 {:.6e} e_max {:.6e} brms {:.6e} f_mse {:.6e}",
        report.first_step,
        report.last_step(),
        report.n_samples,
        report.summary.rel_l2,
        report.summary.e_max,
        report.summary.brms,
        report.summary.f_mse,
    );
    if let Some(step) = report.diverged_at {
        println!("diverged at step {step}");
    }
    println!("wrote {}", csv_path.display());
    if section.plot {
        let svg_path = config.out.join("curves.svg");
        write_plot(&svg_path, &report)?;
        println!("wrote {}", svg_path.display());
    }
    Ok(report)
}

/// Frames per rollout step for the ground-truth stub: taken from the model
/// section or a checkpoint — never defaulted.
fn oracle_window_len(config: &RunConfig, checkpoint: Option<&Path>) -> Result<usize> {
    if let Some(model) = &config.model {
        return Ok(model.t);
    }
    if let Some(path) = checkpoint {
        let (data, _) = load_params(&config.resolve(path))?;
        return Ok(data.config.t);
    }
    Err(Error::config(
        "oracle evaluation needs the window length: give [model] t or an [eval] checkpoint",
    ))
}

/// Verifies the adjoint gradient of the full objective at probes spread over
/// every parameter slot; a failed check maps to the divergence exit code.
pub fn cmd_gradcheck(config: &RunConfig) -> Result<CheckReport> {
    let section = config.gradcheck.clone().unwrap_or_default();
    let weights = config.weights()?;
    let (model_config, window) = match &section.dataset {
        Some(path) => {
            let dataset = load_dataset(&config.resolve(path))?;
            let model_config = model_for(config, &dataset)?;
            let needed = (section.n_roll + 1) * model_config.t;
            if dataset.l_total() < needed {
                return Err(Error::config(format!(
                    "gradcheck window needs {needed} frames, dataset holds {}",
                    dataset.l_total()
                )));
            }
            let states = dataset.trajectories[0].states.data();
            let window = GridField::new(
                states.slice(ndarray::s![0..needed, .., .., ..]).to_owned(),
            )?;
            (model_config, window)
        }
        None => {
            let d_u_hint = config
                .pde
                .as_ref()
                .and_then(|p| ssp_pde::PdeKind::from_tag(&p.kind).ok())
                .map(|k| k.channels());
            let n_full_hint = config.data.as_ref().map(|d| (d.resolution[0], d.resolution[1]));
            let model_config = config.need_model()?.to_model_config(d_u_hint, n_full_hint)?;
            let window = synthetic_window(&model_config, section.n_roll, config.seed)?;
            (model_config, window)
        }
    };
    let model = Model::new(model_config.clone())?;
    let layout = Layout::of(&model_config)?;
    let probes = stratified_probes(&layout, section.count, config.seed);
    let op = RolloutLossOp {
        model: &model,
        weights,
        window,
        n_roll: section.n_roll,
        rec_through_projectors: config
            .train
            .as_ref()
            .map(|t| t.rec_through_projectors)
            .unwrap_or(false),
        layout,
        fault: section.inject_fault.then_some(0),
    };
    let flat = ParamSet::init(&model_config, config.seed)?.to_flat();
    let report = grad_check_at(&op, &flat, &probes, section.eps, section.tol)?;
    println!("{}", report.summary());
    if report.passed {
        Ok(report)
    } else {
        Err(Error::divergence(format!(
            "gradient check failed: {}",
            report.summary()
        )))
    }
}

/// Trains the full model and the standard ablation variants under one budget
/// and writes the comparison table.
pub fn cmd_ablate(config: &RunConfig) -> Result<PathBuf> {
    let section = config.need_ablate()?;
    let train_section = config.need_train()?;
    let train_data = load_dataset(&config.resolve(&section.train_dataset))?;
    let eval_data = load_dataset(&config.resolve(&section.eval_dataset))?;
    let base = model_for(config, &train_data)?;
    let train_config = train_section.to_train_config(config.seed)?;
    let weights = config.weights()?;
    let style = parse_backbone_style(&section.backbone_style)?;
    let variants = standard_variants(&base, &weights, style);
    let rows = ablation_run(
        &train_data,
        &eval_data,
        &base,
        &train_config,
        &weights,
        &variants,
        section.conditioning,
        section.horizon,
        &config.out.join("ablation"),
    )?;
    let csv_path = config.out.join("ablation.csv");
    write_ablation_csv(&rows, &csv_path)?;
    for row in &rows {
        match &row.metrics {
            Some(m) => println!("{}: {} rel_l2 {:.6e}", row.variant, row.status, m.rel_l2),
            None => println!("{}: {}", row.variant, row.status),
        }
    }
    println!("wrote {}", csv_path.display());
    Ok(csv_path)
}
