use std::path::{Path, PathBuf};

use relnet_core::market::{generate_market, load_dataset, save_dataset, MarketDataset, TargetScaling};
use relnet_core::model::{ModelConfig, RelNetModel, Variant};
use relnet_core::nn::{write_atomic, Checkpoint};
use relnet_core::train::{
    evaluate, prepare_split, render_table, run_ablation, threads_from_env, train, PreparedSplit,
};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::gradcheck;

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    write_atomic(path, text.as_bytes()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn path_or(opt: &Option<PathBuf>, default: &str) -> PathBuf {
    opt.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn load(cfg: &RunConfig) -> Result<MarketDataset, CliError> {
    let path = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| CliError::Io("no dataset given (use --dataset PATH)".into()))?;
    Ok(load_dataset(path)?)
}

fn split_day(cfg: &RunConfig, dataset: &MarketDataset) -> u32 {
    cfg.split_day.unwrap_or(dataset.config.horizon_days / 4 * 3)
}

fn model_config(cfg: &RunConfig, dataset: &MarketDataset) -> ModelConfig {
    ModelConfig {
        input_dim: dataset.input_dim(),
        ..cfg.model.clone()
    }
}

pub fn generate(cfg: &RunConfig) -> Result<(), CliError> {
    let dataset = generate_market(&cfg.generator)?;
    let out = path_or(&cfg.out, "market.jsonl");
    save_dataset(&dataset, &out)?;
    let logs: Vec<f64> = dataset.records().iter().map(|r| r.view_count.ln()).collect();
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let std = (logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    println!(
        "wrote {} series to {} (log view count mean {mean:.4}, std {std:.4})",
        dataset.len(),
        out.display()
    );
    Ok(())
}

pub fn train_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let dataset = load(cfg)?;
    let mcfg = model_config(cfg, &dataset);
    mcfg.validate()?;
    let split = prepare_split(&dataset, mcfg.n_related, split_day(cfg, &dataset), cfg.prediction_day_offset)?;
    let mut model = RelNetModel::build(mcfg)?;
    let report = train(&mut model, &split.train, &cfg.train)?;

    let report_path = path_or(&cfg.report, "train_report.json");
    if let Some(epoch) = report.diverged_at {
        write_json(&report_path, &json!({ "run_config": cfg.to_json(), "train": report }))?;
        return Err(CliError::Divergence(format!(
            "training diverged at epoch {epoch}; report written to {}",
            report_path.display()
        )));
    }
    let eval = evaluate(&model, &split.test, &split.scaling, split.prediction_day_offset)?;

    let mut ckpt = model.to_checkpoint();
    ckpt.extras.insert("run_config".into(), cfg.to_json());
    ckpt.extras.insert("target_scaling".into(), json!(split.scaling));
    ckpt.extras.insert("split_day".into(), json!(split.split_day));
    ckpt.extras.insert("prediction_day_offset".into(), json!(split.prediction_day_offset));
    let ckpt_path = path_or(&cfg.checkpoint, "model.json");
    ckpt.save(&ckpt_path)?;
    write_json(
        &report_path,
        &json!({ "run_config": cfg.to_json(), "train": report, "eval": eval, "checkpoint": ckpt_path }),
    )?;

    let last = report.final_loss().expect("at least one epoch");
    println!("final train loss {:.6} ({} samples)", last.total, split.train.len());
    println!("test R² {:.6} (n = {})", eval.r_squared, eval.n_samples);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn extra<T: serde::de::DeserializeOwned>(ckpt: &Checkpoint, key: &str) -> Result<Option<T>, CliError> {
    ckpt.extras
        .get(key)
        .map(|v| serde_json::from_value(v.clone()))
        .transpose()
        .map_err(|e| CliError::Io(format!("checkpoint field `{key}`: {e}")))
}

pub fn eval_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let ckpt_path = path_or(&cfg.checkpoint, "model.json");
    let ckpt = Checkpoint::load(&ckpt_path)?;
    let dataset = load(cfg)?;
    let model = RelNetModel::from_checkpoint(&ckpt)?;
    let width = model.config().input_dim;
    if width != dataset.input_dim() {
        return Err(CliError::Config(format!(
            "checkpoint expects input width {width} but dataset encodes {}",
            dataset.input_dim()
        )));
    }
    let scaling: TargetScaling = extra(&ckpt, "target_scaling")?.unwrap_or_else(TargetScaling::identity);
    let day = match cfg.split_day {
        Some(d) => d,
        None => extra(&ckpt, "split_day")?.unwrap_or_else(|| split_day(cfg, &dataset)),
    };
    let offset: u32 = extra(&ckpt, "prediction_day_offset")?.unwrap_or(cfg.prediction_day_offset);
    let split = prepare_split(&dataset, model.config().n_related, day, offset)?;
    let eval = evaluate(&model, &split.test, &scaling, offset)?;
    let out = path_or(&cfg.report, "eval_report.json");
    write_json(
        &out,
        &json!({ "run_config": cfg.to_json(), "checkpoint": ckpt_path, "split_day": day, "eval": eval }),
    )?;
    println!("test R² {:.6} (n = {})", eval.r_squared, eval.n_samples);
    Ok(())
}

fn ablation_arms(cfg: &RunConfig, dataset: &MarketDataset) -> Vec<ModelConfig> {
    let base = model_config(cfg, dataset);
    Variant::ALL.iter().map(|&v| base.with_variant(v)).collect()
}

pub fn ablate(cfg: &RunConfig) -> Result<(), CliError> {
    let dataset = load(cfg)?;
    let n_related = cfg.model.n_related;
    let split: PreparedSplit = prepare_split(&dataset, n_related, split_day(cfg, &dataset), cfg.prediction_day_offset)?;
    let report = run_ablation(&split, &ablation_arms(cfg, &dataset), &cfg.train, &cfg.seeds, threads_from_env())?;
    let table = render_table(&report);
    let out = path_or(&cfg.report, "ablation_report.json");
    write_json(&out, &json!({ "run_config": cfg.to_json(), "ablation": report }))?;
    write_text(&out.with_extension("txt"), &table)?;
    print!("{table}");
    let diverged = report.arms.iter().flat_map(|a| &a.cells).filter(|c| c.diverged_at.is_some()).count();
    if diverged > 0 {
        return Err(CliError::Divergence(format!(
            "{diverged} model(s) diverged; partial report written to {}",
            out.display()
        )));
    }
    Ok(())
}

pub fn gradcheck_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let checks = gradcheck::run(&cfg.layer, cfg.tolerance)?;
    for (name, r) in &checks {
        println!(
            "{:<18} {}  max rel error {:.3e} ({})",
            name,
            if r.passed { "pass" } else { "FAIL" },
            r.max_rel_error,
            r.worst_param
        );
    }
    if let Some(out) = &cfg.out {
        let reports: Vec<Value> = checks.iter().map(|(n, r)| json!({ "check": n, "report": r })).collect();
        write_json(out, &json!({ "run_config": cfg.to_json(), "step": gradcheck::STEP, "checks": reports }))?;
    }
    let worst = checks
        .iter()
        .filter(|(_, r)| !r.passed)
        .max_by(|a, b| a.1.max_rel_error.total_cmp(&b.1.max_rel_error));
    match worst {
        Some((name, r)) => Err(CliError::GradCheck(format!(
            "{name}: worst parameter {} with relative error {:.3e} (tolerance {:e})",
            r.worst_param, r.max_rel_error, r.tolerance
        ))),
        None => {
            let max = checks.iter().map(|(_, r)| r.max_rel_error).fold(0.0, f64::max);
            println!("all checks passed, max relative error {max:.3e}");
            Ok(())
        }
    }
}
