//! Effective run configuration: built-in defaults, then a `key = value` file,
//! then command-line flags.

use std::path::{Path, PathBuf};

use relnet_core::market::GeneratorConfig;
use relnet_core::model::ModelConfig;
use relnet_core::train::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

/// Layers `gradcheck` can be restricted to.
pub const GRADCHECK_LAYERS: [&str; 6] = ["dense", "relu", "batchnorm", "dropout", "model", "all"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub generator: GeneratorConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Defaults to three quarters of the dataset horizon.
    pub split_day: Option<u32>,
    pub prediction_day_offset: u32,
    pub seeds: Vec<u64>,
    pub tolerance: f64,
    pub layer: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            dataset: None,
            checkpoint: None,
            report: None,
            out: None,
            split_day: None,
            prediction_day_offset: 7,
            seeds: vec![0, 1, 2],
            tolerance: 1e-4,
            layer: "all".to_string(),
        }
    }
}

/// Where a setting came from, for error messages.
#[derive(Debug, Clone, Copy)]
pub enum Source<'a> {
    File(&'a Path, usize),
    Flag,
}

impl Source<'_> {
    fn describe(&self, key: &str) -> String {
        match self {
            Source::File(path, line) => format!("{}:{line}: `{key}`", path.display()),
            Source::Flag => format!("flag `{key}`"),
        }
    }
}

impl RunConfig {
    /// Applies one setting. `seed` drives the market, initialization and
    /// shuffle seeds together.
    pub fn set(&mut self, key: &str, value: &str, source: Source) -> Result<(), CliError> {
        let bad = |why: String| CliError::Config(format!("{}: {why}", source.describe(key)));
        let value = value.trim();
        match key {
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "report" => self.report = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            "split_day" => self.split_day = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
            "prediction_day_offset" => self.prediction_day_offset = value.parse().map_err(|e| bad(format!("{e}")))?,
            "seeds" => {
                self.seeds = value
                    .split(',')
                    .map(|s| s.trim().parse::<u64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| bad(format!("expected comma-separated integers: {e}")))?;
                if self.seeds.is_empty() {
                    return Err(bad("at least one seed is required".into()));
                }
            }
            "tolerance" => self.tolerance = value.parse().map_err(|e| bad(format!("{e}")))?,
            "layer" => {
                if !GRADCHECK_LAYERS.contains(&value) {
                    return Err(bad(format!("expected one of {}", GRADCHECK_LAYERS.join(" | "))));
                }
                self.layer = value.to_string();
            }
            "seed" => {
                let seed: u64 = value.parse().map_err(|e| bad(format!("{e}")))?;
                self.generator.seed = seed;
                self.model.init_seed = seed;
                self.train.seed = seed;
            }
            _ => {
                let mut hit = false;
                self.generator = patch(&self.generator, key, value, &mut hit).map_err(bad)?;
                self.model = patch(&self.model, key, value, &mut hit).map_err(bad)?;
                self.train = patch(&self.train, key, value, &mut hit).map_err(bad)?;
                if !hit {
                    return Err(bad("unknown key".into()));
                }
            }
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("{}:{}: expected `key = value`", path.display(), i + 1))
            })?;
            self.set(key.trim(), value, Source::File(path, i + 1))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("run config serializes")
    }
}

/// Rewrites `key` in the serialized form of `section` if it has that field,
/// parsing `value` according to the field's current type.
fn patch<T: Serialize + for<'de> Deserialize<'de>>(
    section: &T,
    key: &str,
    value: &str,
    hit: &mut bool,
) -> Result<T, String> {
    let mut map: Map<String, Value> = match serde_json::to_value(section).expect("section serializes") {
        Value::Object(m) => m,
        _ => unreachable!("config sections are structs"),
    };
    let Some(current) = map.get(key) else {
        return serde_json::from_value(Value::Object(map)).map_err(|e| e.to_string());
    };
    let parsed = match current {
        Value::Bool(_) => Value::Bool(value.parse::<bool>().map_err(|_| format!("expected true or false, got `{value}`"))?),
        Value::Number(n) if n.is_f64() => {
            let v: f64 = value.parse().map_err(|_| format!("expected a number, got `{value}`"))?;
            serde_json::Number::from_f64(v)
                .map(Value::Number)
                .ok_or_else(|| format!("expected a finite number, got `{value}`"))?
        }
        Value::Number(_) => Value::Number(
            value
                .parse::<u64>()
                .map_err(|_| format!("expected a non-negative integer, got `{value}`"))?
                .into(),
        ),
        _ => Value::String(value.to_string()),
    };
    map.insert(key.to_string(), parsed);
    *hit = true;
    serde_json::from_value(Value::Object(map)).map_err(|e| e.to_string())
}
