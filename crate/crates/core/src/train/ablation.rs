use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, train, PreparedSplit, TrainConfig, TrainError};
use crate::model::{ModelConfig, RelNetModel, Variant};

/// One trained model: an arm at one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub seed: u64,
    /// Absent when training diverged.
    pub r_squared: Option<f64>,
    pub mae: Option<f64>,
    pub diverged_at: Option<usize>,
    pub epochs_run: usize,
    pub final_train_loss: Option<f64>,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub variant: Variant,
    pub config: ModelConfig,
    pub cells: Vec<Cell>,
    pub surviving_seeds: usize,
    pub mean_r2: Option<f64>,
    /// Sample standard deviation over surviving seeds.
    pub std_r2: Option<f64>,
    pub mean_mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub name: String,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seeds: Vec<u64>,
    pub split_day: u32,
    pub prediction_day_offset: u32,
    pub n_train: usize,
    pub n_test: usize,
    pub train_config: TrainConfig,
    pub arms: Vec<ArmSummary>,
    /// `DNN+MTL − DNN` and `DNN+RN+MTL − DNN+MTL` on mean test R².
    pub deltas: Vec<Delta>,
    pub warnings: Vec<String>,
    pub wall_clock_seconds: f64,
}

impl AblationReport {
    pub fn arm(&self, variant: Variant) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.variant == variant)
    }

    pub fn delta(&self, name: &str) -> Option<f64> {
        self.deltas.iter().find(|d| d.name == name).and_then(|d| d.value)
    }
}

/// Worker count from `RELNET_THREADS`, falling back to the machine's parallelism.
pub fn threads_from_env() -> usize {
    std::env::var("RELNET_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn train_cell(
    split: &PreparedSplit,
    arm: &ModelConfig,
    train_config: &TrainConfig,
    seed: u64,
) -> Result<Cell, TrainError> {
    let start = Instant::now();
    let mut model = RelNetModel::build(ModelConfig {
        init_seed: seed,
        ..arm.clone()
    })?;
    let report = train(
        &mut model,
        &split.train,
        &TrainConfig {
            seed,
            ..train_config.clone()
        },
    )?;
    let eval = match report.diverged_at {
        Some(_) => None,
        None => Some(evaluate(&model, &split.test, &split.scaling, split.prediction_day_offset)?),
    };
    Ok(Cell {
        seed,
        r_squared: eval.as_ref().map(|e| e.r_squared),
        mae: eval.as_ref().map(|e| e.mae),
        diverged_at: report.diverged_at,
        epochs_run: report.epochs.len(),
        final_train_loss: report.final_loss().map(|l| l.total),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

fn summarize(arm: &ModelConfig, cells: Vec<Cell>) -> ArmSummary {
    let r2: Vec<f64> = cells.iter().filter_map(|c| c.r_squared).collect();
    let mae: Vec<f64> = cells.iter().filter_map(|c| c.mae).collect();
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let mean_r2 = mean(&r2);
    let std_r2 = mean_r2.map(|m| {
        if r2.len() < 2 {
            0.0
        } else {
            (r2.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (r2.len() - 1) as f64).sqrt()
        }
    });
    ArmSummary {
        variant: arm.variant,
        config: arm.clone(),
        surviving_seeds: r2.len(),
        mean_r2,
        std_r2,
        mean_mae: mean(&mae),
        cells,
    }
}

/// Trains every arm at every seed on the same split. Each seed sets both the
/// initialization seed of every arm and the shuffle seed, so arms that share
/// sub-networks start from identical weights.
pub fn run_ablation(
    split: &PreparedSplit,
    arms: &[ModelConfig],
    train_config: &TrainConfig,
    seeds: &[u64],
    threads: usize,
) -> Result<AblationReport, TrainError> {
    if seeds.is_empty() {
        return Err(TrainError::Config("at least one seed is required".into()));
    }
    if arms.is_empty() {
        return Err(TrainError::Config("at least one arm is required".into()));
    }
    for arm in arms {
        arm.validate()?;
        train_config.validate(arm.encoder_batch_norm || arm.rn_batch_norm)?;
    }
    let start = Instant::now();
    let jobs: Vec<(usize, u64)> = (0..arms.len())
        .flat_map(|a| seeds.iter().map(move |&s| (a, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| TrainError::Config(format!("thread pool: {e}")))?;
    let cells: Vec<Cell> = pool.install(|| {
        jobs.par_iter()
            .map(|&(a, seed)| train_cell(split, &arms[a], train_config, seed))
            .collect::<Result<_, _>>()
    })?;

    let mut warnings = Vec::new();
    let mut summaries = Vec::with_capacity(arms.len());
    for (a, arm) in arms.iter().enumerate() {
        let arm_cells: Vec<Cell> = cells[a * seeds.len()..(a + 1) * seeds.len()].to_vec();
        for c in arm_cells.iter().filter(|c| c.diverged_at.is_some()) {
            warnings.push(format!(
                "{} seed {} diverged at epoch {}; aggregated over surviving seeds",
                arm.variant.label(),
                c.seed,
                c.diverged_at.unwrap_or(0)
            ));
        }
        summaries.push(summarize(arm, arm_cells));
    }
    let mean_of = |v: Variant| summaries.iter().find(|s| s.variant == v).and_then(|s| s.mean_r2);
    let diff = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(a, b)| a - b);
    let deltas = vec![
        Delta {
            name: "DNN+MTL - DNN".into(),
            value: diff(mean_of(Variant::DnnMtl), mean_of(Variant::Dnn)),
        },
        Delta {
            name: "DNN+RN+MTL - DNN+MTL".into(),
            value: diff(mean_of(Variant::DnnRnMtl), mean_of(Variant::DnnMtl)),
        },
    ];
    Ok(AblationReport {
        seeds: seeds.to_vec(),
        split_day: split.split_day,
        prediction_day_offset: split.prediction_day_offset,
        n_train: split.train.len(),
        n_test: split.test.len(),
        train_config: train_config.clone(),
        arms: summaries,
        deltas,
        warnings,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Plain-text grid: one column per arm, a mean row, a spread row and a
/// signed delta row against the column to the left.
pub fn render_table(report: &AblationReport) -> String {
    const W: usize = 14;
    let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Test R² on log view count, mean over {} seed(s), {} train / {} test",
        report.seeds.len(),
        report.n_train,
        report.n_test
    );
    let _ = write!(out, "{:<22}", "");
    for arm in &report.arms {
        let _ = write!(out, "{:>W$}", arm.variant.label());
    }
    out.push('\n');
    let _ = write!(out, "{:<22}", format!("{} days before", report.prediction_day_offset));
    for arm in &report.arms {
        let _ = write!(out, "{:>W$}", fmt(arm.mean_r2));
    }
    out.push('\n');
    let _ = write!(out, "{:<22}", "  std over seeds");
    for arm in &report.arms {
        let _ = write!(out, "{:>W$}", fmt(arm.std_r2));
    }
    out.push('\n');
    let _ = write!(out, "{:<22}", "  delta vs left");
    for (i, arm) in report.arms.iter().enumerate() {
        let cell = match i.checked_sub(1).map(|j| &report.arms[j]) {
            None => String::new(),
            Some(prev) => arm
                .mean_r2
                .zip(prev.mean_r2)
                .map_or_else(|| "n/a".to_string(), |(a, b)| format!("{:+.4}", a - b)),
        };
        let _ = write!(out, "{cell:>W$}");
    }
    out.push('\n');
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{generate_market, GeneratorConfig};
    use crate::train::prepare_split;

    fn small_split() -> PreparedSplit {
        let d = generate_market(&GeneratorConfig {
            num_series: 120,
            horizon_days: 400,
            ..GeneratorConfig::default()
        })
        .unwrap();
        prepare_split(&d, 2, 300, 7).unwrap()
    }

    fn arm(variant: Variant) -> ModelConfig {
        ModelConfig {
            input_dim: 213,
            n_related: 2,
            encoder_depth: 2,
            encoder_width: 8,
            repr_dim: 4,
            relation_depth: 1,
            relation_width: 4,
            aggregate_depth: 1,
            aggregate_width: 4,
            head_depth: 1,
            head_width: 4,
            variant,
            ..ModelConfig::default()
        }
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 16,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn duplicate_arms_agree() {
        let split = small_split();
        let arms = [arm(Variant::DnnMtl), arm(Variant::DnnMtl)];
        let report = run_ablation(&split, &arms, &quick(), &[0, 1], 1).unwrap();
        assert_eq!(report.arms[0].mean_r2, report.arms[1].mean_r2);
        assert!(report.arms[0].mean_r2.is_some());
    }

    #[test]
    fn grid_has_three_columns_in_order_and_signed_deltas() {
        let split = small_split();
        let arms: Vec<ModelConfig> = Variant::ALL.iter().map(|&v| arm(v)).collect();
        let report = run_ablation(&split, &arms, &quick(), &[0], 2).unwrap();
        assert_eq!(report.arms.iter().map(|a| a.cells.len()).sum::<usize>(), 3);
        let table = render_table(&report);
        let header = table.lines().nth(1).unwrap();
        let (a, b, c) = (header.find("DNN ").unwrap(), header.find("DNN+MTL").unwrap(), header.find("DNN+RN+MTL").unwrap());
        assert!(a < b && b < c, "{table}");
        let delta_row = table.lines().find(|l| l.contains("delta")).unwrap();
        assert_eq!(delta_row.matches(['+', '-']).count(), 2, "{table}");
        assert!(report.delta("DNN+MTL - DNN").is_some());
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let split = small_split();
        let arms = [arm(Variant::Dnn), arm(Variant::DnnRnMtl)];
        let strip = |mut r: AblationReport| {
            r.wall_clock_seconds = 0.0;
            r.arms.iter_mut().flat_map(|a| a.cells.iter_mut()).for_each(|c| c.wall_clock_seconds = 0.0);
            r
        };
        let one = strip(run_ablation(&split, &arms, &quick(), &[3, 4], 1).unwrap());
        let two = strip(run_ablation(&split, &arms, &quick(), &[3, 4], 2).unwrap());
        assert_eq!(one, two);
    }

    #[test]
    fn diverged_cells_are_excluded_with_a_warning() {
        let split = small_split();
        let cfg = TrainConfig {
            learning_rate: 10.0,
            divergence_threshold: 10.0,
            epochs: 20,
            ..quick()
        };
        let report = run_ablation(&split, &[arm(Variant::Dnn)], &cfg, &[0], 1).unwrap();
        assert_eq!(report.arms[0].surviving_seeds, 0);
        assert_eq!(report.arms[0].mean_r2, None);
        assert!(!report.warnings.is_empty());
        assert!(render_table(&report).contains("n/a"));
    }

    #[test]
    fn no_seeds_is_an_error() {
        assert!(run_ablation(&small_split(), &[arm(Variant::Dnn)], &quick(), &[], 1).is_err());
    }
}
