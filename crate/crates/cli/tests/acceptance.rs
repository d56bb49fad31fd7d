//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p relnet-cli --test acceptance`. Criterion numbers
//! given after `--` restrict the run, e.g. `-- 1 3 9`.

use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relnet_core::market::{generate_market, load_dataset, save_dataset, GeneratorConfig, TargetScaling};
use relnet_core::model::{ModelConfig, RelNetModel, RelationalSample, RnMode, Variant};
use relnet_core::nn::{Checkpoint, DenseLayer, MlpBlock, MlpLayer, Mode};
use relnet_core::train::{evaluate, evaluate_r2, prepare_split, r_squared, train, TrainConfig};
use serde_json::Value;

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($fmt)+));
        }
    };
}

fn relnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relnet"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn checked(dir: &Path, args: &[&str]) -> Result<Output, String> {
    let out = relnet(dir, args);
    if out.status.success() {
        Ok(out)
    } else {
        Err(format!(
            "`relnet {}` exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn tempdir() -> Result<tempfile::TempDir, String> {
    tempfile::tempdir().map_err(|e| e.to_string())
}

fn gradient_fidelity() -> Outcome {
    let dir = tempdir()?;
    let start = Instant::now();
    checked(dir.path(), &["gradcheck", "--out", "g.json"])?;
    let secs = start.elapsed().as_secs_f64();
    let report = read_json(&dir.path().join("g.json"))?;
    let checks = report["checks"].as_array().ok_or("no checks in report")?;
    let names: Vec<&str> = checks.iter().filter_map(|c| c["check"].as_str()).collect();
    for wanted in ["dense", "relu", "batchnorm", "dropout", "model (anchored)", "model (all pairs)"] {
        ensure!(names.contains(&wanted), "check `{wanted}` missing from {names:?}");
    }
    let mut worst = 0.0f64;
    for c in checks {
        let err = c["report"]["max_rel_error"].as_f64().ok_or("missing max_rel_error")?;
        ensure!(err < 1e-4, "{} relative error {err:e}", c["check"]);
        worst = worst.max(err);
    }
    ensure!(report["step"].as_f64() == Some(1e-5), "step was {}", report["step"]);
    ensure!(secs < 60.0, "took {secs:.1}s");
    Ok(format!("{} checks, max relative error {worst:.2e}, {secs:.1}s", checks.len()))
}

fn random_model(seed: u64, mode: RnMode) -> Result<(RelNetModel, Vec<RelationalSample>), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let input_dim = rng.gen_range(2..=8);
    let width = |rng: &mut ChaCha8Rng| rng.gen_range(2..=8);
    let config = ModelConfig {
        input_dim,
        n_related: 3,
        encoder_depth: rng.gen_range(1..=3),
        encoder_width: width(&mut rng),
        repr_dim: width(&mut rng),
        relation_depth: rng.gen_range(1..=3),
        relation_width: width(&mut rng),
        aggregate_depth: rng.gen_range(1..=3),
        aggregate_width: width(&mut rng),
        head_depth: rng.gen_range(1..=2),
        head_width: width(&mut rng),
        variant: Variant::DnnRnMtl,
        rn_mode: mode,
        init_seed: seed,
        ..ModelConfig::default()
    };
    let mut model = RelNetModel::build(config).map_err(|e| e.to_string())?;
    for p in model.params_mut() {
        if p.name.ends_with("bias") {
            p.values.iter_mut().for_each(|v| *v = rng.gen_range(0.0..0.3));
        }
    }
    let vec = |rng: &mut ChaCha8Rng| (0..input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
    let batch = (0..5)
        .map(|_| RelationalSample {
            x: vec(&mut rng),
            related: (0..3).map(|_| vec(&mut rng)).collect(),
            y: 0.0,
            y_aux: 0.0,
        })
        .collect();
    Ok((model, batch))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for at in 0..=p.len() {
            let mut q = p.clone();
            q.insert(at, n - 1);
            out.push(q);
        }
    }
    out
}

fn outputs(model: &RelNetModel, batch: &[RelationalSample]) -> Result<Vec<f64>, String> {
    let preds = model.predict(batch).map_err(|e| e.to_string())?;
    Ok(preds.iter().flat_map(|p| [p.y_hat, p.y_aux_hat.unwrap_or(0.0)]).collect())
}

fn max_relative_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-300))
        .filter(|r| r.is_finite())
        .fold(0.0, f64::max)
}

fn permutation_invariance() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let (model, batch) = random_model(seed, RnMode::Anchored)?;
        let reference = outputs(&model, &batch)?;
        ensure!(reference.iter().any(|v| *v != 0.0), "model {seed} is constant zero");
        for perm in permutations(3) {
            let permuted: Vec<RelationalSample> = batch
                .iter()
                .map(|s| RelationalSample {
                    related: perm.iter().map(|&i| s.related[i].clone()).collect(),
                    ..s.clone()
                })
                .collect();
            let change = max_relative_change(&reference, &outputs(&model, &permuted)?);
            ensure!(change < 1e-9, "anchored model {seed}, permutation {perm:?}: {change:e}");
            worst = worst.max(change);
        }

        let (model, batch) = random_model(seed, RnMode::AllPairs)?;
        let reference = outputs(&model, &batch)?;
        for perm in permutations(4) {
            let permuted: Vec<RelationalSample> = batch
                .iter()
                .map(|s| {
                    let objects: Vec<&Vec<f64>> = std::iter::once(&s.x).chain(&s.related).collect();
                    RelationalSample {
                        x: objects[perm[0]].clone(),
                        related: perm[1..].iter().map(|&i| objects[i].clone()).collect(),
                        ..s.clone()
                    }
                })
                .collect();
            let change = max_relative_change(&reference, &outputs(&model, &permuted)?);
            ensure!(change < 1e-9, "all-pairs model {seed}, permutation {perm:?}: {change:e}");
            worst = worst.max(change);
        }
    }
    Ok(format!("100 anchored and 100 all-pairs models, max relative change {worst:.2e}"))
}

/// A one-feature model whose prediction is its input.
fn passthrough_model() -> Result<RelNetModel, String> {
    let config = ModelConfig {
        input_dim: 1,
        n_related: 0,
        encoder_depth: 1,
        repr_dim: 1,
        encoder_batch_norm: false,
        dropout_keep: 1.0,
        variant: Variant::Dnn,
        ..ModelConfig::default()
    };
    let mut model = RelNetModel::build(config).map_err(|e| e.to_string())?;
    let single = |name: &str, relu: bool| -> Result<MlpBlock, String> {
        let dense = DenseLayer::from_parts(&format!("{name}.0"), 1, 1, &[1.0], &[0.0]).map_err(|e| e.to_string())?;
        MlpBlock::from_layers(name, vec![MlpLayer::new(dense, None, relu, None)]).map_err(|e| e.to_string())
    };
    *model.encoder_mut() = single("encoder", true)?;
    *model.head_main_mut() = single("head_main", false)?;
    Ok(model)
}

fn r2_oracle() -> Outcome {
    let model = passthrough_model()?;
    let y = [0.0, 1.0, 2.0, 3.0];
    let cases: [(&str, [f64; 4], f64); 3] = [
        ("perfect", y, 1.0),
        ("mean predictor", [1.5; 4], 0.0),
        ("four-point", [0.5, 1.0, 2.5, 3.0], 0.9),
    ];
    for (name, y_hat, expected) in cases {
        let samples: Vec<RelationalSample> = y
            .iter()
            .zip(y_hat)
            .map(|(&t, p)| RelationalSample {
                x: vec![p],
                related: vec![],
                y: t,
                y_aux: 0.0,
            })
            .collect();
        let via_model = evaluate_r2(&model, &samples).map_err(|e| e.to_string())?.r_squared;
        let direct = r_squared(&y, &y_hat).map_err(|e| e.to_string())?;
        for got in [via_model, direct] {
            ensure!((got - expected).abs() <= 1e-12, "{name}: expected {expected}, got {got}");
        }
    }
    Ok("perfect 1, mean predictor 0, four-point 0.9, all within 1e-12".into())
}

fn mtl_degeneracy() -> Outcome {
    let mut worst = 0.0f64;
    let mut compared = 0;
    for variant in [Variant::DnnMtl, Variant::DnnRnMtl] {
        for mode in [RnMode::Anchored, RnMode::AllPairs] {
            let config = ModelConfig {
                input_dim: 7,
                n_related: 3,
                encoder_depth: 3,
                encoder_width: 8,
                repr_dim: 6,
                relation_width: 8,
                aggregate_width: 8,
                head_width: 8,
                lambda_aux: 0.0,
                dropout_keep: 1.0,
                variant,
                rn_mode: mode,
                init_seed: 3,
                ..ModelConfig::default()
            };
            let batch: Vec<RelationalSample> = (0..5)
                .map(|i| RelationalSample {
                    x: (0..7).map(|k| ((i * 7 + k) as f64 * 0.37).sin()).collect(),
                    related: (0..3)
                        .map(|j| (0..7).map(|k| ((i * 31 + j * 7 + k) as f64 * 0.53).cos()).collect())
                        .collect(),
                    y: (i as f64 * 0.9).sin(),
                    y_aux: (i as f64 * 1.3).cos(),
                })
                .collect();
            let mut with_aux = RelNetModel::build(config.clone()).map_err(|e| e.to_string())?;
            let mut without = RelNetModel::build(config).map_err(|e| e.to_string())?;
            without.remove_aux_head();
            for m in [&mut with_aux, &mut without] {
                let (_, ctx) = m.loss(&batch, Mode::Train).map_err(|e| e.to_string())?;
                m.backward(&ctx).map_err(|e| e.to_string())?;
            }
            let shared: Vec<_> = with_aux.params().into_iter().filter(|p| !p.name.starts_with("head_aux")).collect();
            let reference = without.params();
            ensure!(shared.len() == reference.len(), "{variant}: parameter lists differ");
            for (a, b) in shared.iter().zip(&reference) {
                ensure!(a.name == b.name, "{} vs {}", a.name, b.name);
                for (ga, gb) in a.grads.iter().zip(&b.grads) {
                    let diff = (ga - gb).abs();
                    ensure!(diff <= 1e-12, "{variant} {mode} {}: {diff:e}", a.name);
                    worst = worst.max(diff);
                    compared += 1;
                }
            }
        }
    }
    Ok(format!("{compared} shared and main-head gradients, max difference {worst:.2e}"))
}

fn memorization() -> Outcome {
    let start = Instant::now();
    let dataset = generate_market(&GeneratorConfig::default()).map_err(|e| e.to_string())?;
    let split = prepare_split(&dataset, 3, 1095, 7).map_err(|e| e.to_string())?;
    let samples = &split.train[..32];
    let mut reached = Vec::new();
    for seed in 0..3u64 {
        // capacity check: dropout would deliberately prevent memorization
        let config = ModelConfig {
            input_dim: dataset.input_dim(),
            init_seed: seed,
            dropout_keep: 1.0,
            ..ModelConfig::default()
        };
        let mut model = RelNetModel::build(config).map_err(|e| e.to_string())?;
        let train_config = TrainConfig {
            epochs: 2000,
            seed,
            ..TrainConfig::default()
        };
        let report = train(&mut model, samples, &train_config).map_err(|e| e.to_string())?;
        let r2 = if report.diverged_at.is_some() {
            f64::NAN
        } else {
            evaluate(&model, samples, &TargetScaling::identity(), 7).map_err(|e| e.to_string())?.r_squared
        };
        reached.push((seed, r2));
    }
    let secs = start.elapsed().as_secs_f64();
    let passing = reached.iter().filter(|(_, r2)| *r2 >= 0.99).count();
    let summary: Vec<String> = reached.iter().map(|(s, r)| format!("seed {s}: {r:.4}")).collect();
    ensure!(passing >= 2, "train R² {}", summary.join(", "));
    ensure!(secs < 300.0, "took {secs:.0}s");
    Ok(format!("train R² {} after 2000 epochs with dropout off, {secs:.0}s", summary.join(", ")))
}

fn arm_means(report: &Value) -> Result<[f64; 3], String> {
    let arms = report["ablation"]["arms"].as_array().ok_or("no arms")?;
    let mut out = [f64::NAN; 3];
    for (slot, name) in out.iter_mut().zip(["dnn", "dnn_mtl", "dnn_rn_mtl"]) {
        let arm = arms.iter().find(|a| a["variant"] == name).ok_or(format!("arm {name} missing"))?;
        *slot = arm["mean_r2"].as_f64().ok_or(format!("arm {name} has no mean"))?;
    }
    Ok(out)
}

/// Generates a market with `extra` generator flags, then ablates it.
fn ablate_market(generate: &[&str], ablate: &[&str]) -> Result<(Value, String, f64), String> {
    let dir = tempdir()?;
    let mut args = vec!["generate", "--out", "m.jsonl"];
    args.extend_from_slice(generate);
    checked(dir.path(), &args)?;
    let start = Instant::now();
    let mut args = vec!["ablate", "--dataset", "m.jsonl", "--report", "a.json"];
    args.extend_from_slice(ablate);
    let out = checked(dir.path(), &args)?;
    let secs = start.elapsed().as_secs_f64();
    let report = read_json(&dir.path().join("a.json"))?;
    Ok((report, String::from_utf8_lossy(&out.stdout).into_owned(), secs))
}

fn ablation_ordering() -> Outcome {
    let (report, table, secs) = ablate_market(&[], &["--seeds", "0,1,2", "--encoder-depth", "6"])?;
    print!("{table}");
    let [dnn, mtl, rn] = arm_means(&report)?;
    let line = format!(
        "DNN {dnn:.4}, DNN+MTL {mtl:.4} ({:+.4}), DNN+RN+MTL {rn:.4} ({:+.4}), {secs:.0}s",
        mtl - dnn,
        rn - mtl
    );
    ensure!(mtl >= dnn + 0.01 && rn >= mtl + 0.01, "{line}");
    ensure!(secs < 1800.0, "{line}");
    Ok(line)
}

fn null_control() -> Outcome {
    let (report, table, secs) = ablate_market(
        &["--competition-strength", "0"],
        &["--seeds", "0,1,2,3,4", "--encoder-depth", "6"],
    )?;
    print!("{table}");
    let [_, mtl, rn] = arm_means(&report)?;
    let line = format!("DNN+RN+MTL - DNN+MTL = {:+.4} over 5 seeds, {secs:.0}s", rn - mtl);
    ensure!(rn - mtl < 0.02, "{line}");
    Ok(line)
}

fn strip_wall_clock(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.retain(|k, _| !k.contains("wall_clock"));
            map.values_mut().for_each(strip_wall_clock);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_wall_clock),
        _ => {}
    }
}

fn determinism() -> Outcome {
    let dir = tempdir()?;
    checked(dir.path(), &["generate", "--num-series", "300", "--out", "m.jsonl"])?;
    let mut reports = Vec::new();
    for _ in 0..2 {
        checked(
            dir.path(),
            &["ablate", "--dataset", "m.jsonl", "--seeds", "0,1", "--epochs", "3", "--encoder-depth", "3", "--report", "a.json"],
        )?;
        let mut report = read_json(&dir.path().join("a.json"))?;
        strip_wall_clock(&mut report);
        reports.push(report);
    }
    ensure!(reports[0] == reports[1], "reports differ outside wall-clock fields");
    let bytes = serde_json::to_string(&reports[0]).map_err(|e| e.to_string())?.len();
    Ok(format!("two ablate runs agree ({bytes} bytes of report JSON compared)"))
}

fn round_trip() -> Outcome {
    let dir = tempdir()?;
    let dataset = generate_market(&GeneratorConfig {
        num_series: 400,
        ..GeneratorConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let path = dir.path().join("m.jsonl");
    save_dataset(&dataset, &path).map_err(|e| e.to_string())?;
    let loaded = load_dataset(&path).map_err(|e| e.to_string())?;
    ensure!(loaded.config == dataset.config, "generator config changed");
    ensure!(loaded.len() == dataset.len(), "record count changed");
    for (a, b) in dataset.records().iter().zip(loaded.records()) {
        let bits = |r: &relnet_core::SeriesRecord| {
            [r.budget_score, r.buzz_score, r.view_count, r.popularity_index].map(f64::to_bits)
        };
        ensure!(a == b && bits(a) == bits(b), "record {} changed", a.id);
    }

    let split = prepare_split(&dataset, 3, 1095, 7).map_err(|e| e.to_string())?;
    let mut model = RelNetModel::build(ModelConfig {
        input_dim: dataset.input_dim(),
        encoder_depth: 3,
        ..ModelConfig::default()
    })
    .map_err(|e| e.to_string())?;
    train(
        &mut model,
        &split.train,
        &TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let ckpt_path = dir.path().join("model.json");
    model.to_checkpoint().save(&ckpt_path).map_err(|e| e.to_string())?;
    let restored = RelNetModel::from_checkpoint(&Checkpoint::load(&ckpt_path).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let mut values = 0;
    for (a, b) in model.params().iter().zip(restored.params()) {
        ensure!(a.name == b.name, "{} vs {}", a.name, b.name);
        for (x, y) in a.values.iter().zip(&b.values) {
            ensure!(x.to_bits() == y.to_bits(), "{} changed: {x:e} vs {y:e}", a.name);
            values += 1;
        }
    }
    let before = outputs(&model, &split.test)?;
    let after = outputs(&restored, &split.test)?;
    ensure!(
        before.iter().zip(&after).all(|(x, y)| x.to_bits() == y.to_bits()),
        "predictions changed after reload"
    );
    Ok(format!("{} records and {values} parameters bit-identical after reload", dataset.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "gradient fidelity", gradient_fidelity),
        (2, "permutation invariance", permutation_invariance),
        (3, "R² oracle", r2_oracle),
        (4, "MTL degeneracy", mtl_degeneracy),
        (5, "memorization capacity", memorization),
        (6, "ablation ordering", ablation_ordering),
        (7, "null-structure control", null_control),
        (8, "determinism", determinism),
        (9, "round trip", round_trip),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for (number, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&number) {
            continue;
        }
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {number} ({name}): PASS: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("criterion {number} ({name}): FAIL: {detail}");
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
