//! `relnet`: generate a synthetic market, train and evaluate the popularity
//! model, run the three-arm ablation, and check gradients.
//!
//! Settings resolve as flag > `--config` file > built-in default. Exit codes:
//! 0 success, 2 config error, 3 I/O error, 4 divergence, 5 gradient check failure.

mod commands;
mod config;
mod error;
mod gradcheck;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{RunConfig, Source};
use error::CliError;

#[derive(Parser)]
#[command(name = "relnet", version, about = "Relation-network popularity model on a synthetic market")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` file; `#` starts a comment.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Market, initialization and shuffle seed.
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    out: Option<String>,
    /// Any config key, e.g. `--set dropout_keep=0.8`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    split_day: Option<String>,
    #[arg(long)]
    report: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic market as JSON lines.
    Generate {
        #[arg(long)]
        num_series: Option<String>,
        #[arg(long)]
        competition_strength: Option<String>,
    },
    /// Train one variant and write a checkpoint and report.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: Option<String>,
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        n_related: Option<String>,
        #[arg(long)]
        epochs: Option<String>,
        #[arg(long)]
        encoder_depth: Option<String>,
        #[arg(long)]
        learning_rate: Option<String>,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: Option<String>,
    },
    /// Train DNN, DNN+MTL and DNN+RN+MTL over several seeds.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated seed list.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        epochs: Option<String>,
        #[arg(long)]
        encoder_depth: Option<String>,
    },
    /// Compare analytic gradients with central differences.
    Gradcheck {
        /// dense | relu | batchnorm | dropout | model | all
        #[arg(long)]
        layer: Option<String>,
        #[arg(long)]
        tolerance: Option<String>,
    },
}

fn data_flags(d: DataArgs) -> Vec<(&'static str, Option<String>)> {
    vec![("dataset", d.dataset), ("split_day", d.split_day), ("report", d.report)]
}

impl Command {
    fn flags(self) -> (&'static str, Vec<(&'static str, Option<String>)>) {
        match self {
            Command::Generate {
                num_series,
                competition_strength,
            } => (
                "generate",
                vec![("num_series", num_series), ("competition_strength", competition_strength)],
            ),
            Command::Train {
                data,
                checkpoint,
                variant,
                n_related,
                epochs,
                encoder_depth,
                learning_rate,
            } => {
                let mut f = data_flags(data);
                f.extend([
                    ("checkpoint", checkpoint),
                    ("variant", variant),
                    ("n_related", n_related),
                    ("epochs", epochs),
                    ("encoder_depth", encoder_depth),
                    ("learning_rate", learning_rate),
                ]);
                ("train", f)
            }
            Command::Eval { data, checkpoint } => {
                let mut f = data_flags(data);
                f.push(("checkpoint", checkpoint));
                ("eval", f)
            }
            Command::Ablate {
                data,
                seeds,
                epochs,
                encoder_depth,
            } => {
                let mut f = data_flags(data);
                f.extend([("seeds", seeds), ("epochs", epochs), ("encoder_depth", encoder_depth)]);
                ("ablate", f)
            }
            Command::Gradcheck { layer, tolerance } => ("gradcheck", vec![("layer", layer), ("tolerance", tolerance)]),
        }
    }
}

fn resolve(common: Common, flags: Vec<(&'static str, Option<String>)>) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v, Source::Flag)?;
    }
    let named = [("seed", common.seed), ("out", common.out)].into_iter().chain(flags);
    for (key, value) in named {
        if let Some(v) = value {
            cfg.set(key, &v, Source::Flag)?;
        }
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, flags) = cli.command.flags();
    let cfg = resolve(cli.common, flags)?;
    match name {
        "generate" => commands::generate(&cfg),
        "train" => commands::train_cmd(&cfg),
        "eval" => commands::eval_cmd(&cfg),
        "ablate" => commands::ablate(&cfg),
        _ => commands::gradcheck_cmd(&cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("relnet: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
