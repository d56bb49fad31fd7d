use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Ablation arm. External names: `dnn`, `dnn_mtl`, `dnn_rn_mtl`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Dnn,
    DnnMtl,
    DnnRnMtl,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Dnn, Variant::DnnMtl, Variant::DnnRnMtl];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Dnn => "dnn",
            Variant::DnnMtl => "dnn_mtl",
            Variant::DnnRnMtl => "dnn_rn_mtl",
        }
    }

    /// Column label used in rendered tables.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Dnn => "DNN",
            Variant::DnnMtl => "DNN+MTL",
            Variant::DnnRnMtl => "DNN+RN+MTL",
        }
    }

    pub fn has_aux(self) -> bool {
        !matches!(self, Variant::Dnn)
    }

    pub fn has_relations(self) -> bool {
        matches!(self, Variant::DnnRnMtl)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dnn" => Ok(Variant::Dnn),
            "dnn_mtl" => Ok(Variant::DnnMtl),
            "dnn_rn_mtl" => Ok(Variant::DnnRnMtl),
            other => Err(ModelError::Config(format!(
                "variant must be one of dnn | dnn_mtl | dnn_rn_mtl, got `{other}`"
            ))),
        }
    }
}

/// How relations are summed before the aggregator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RnMode {
    /// `f(Σᵢ g(o, oᵢ))`: main object against each related object.
    Anchored,
    /// `f(Σ_{i<j} g(oᵢ, oⱼ))` over all `n + 1` objects, with `g` symmetrized.
    AllPairs,
}

impl FromStr for RnMode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "anchored" => Ok(RnMode::Anchored),
            "all_pairs" => Ok(RnMode::AllPairs),
            other => Err(ModelError::Config(format!(
                "rn_mode must be anchored | all_pairs, got `{other}`"
            ))),
        }
    }
}

impl fmt::Display for RnMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RnMode::Anchored => "anchored",
            RnMode::AllPairs => "all_pairs",
        })
    }
}

/// Architecture and loss weights.
///
/// Depths count dense layers. Head depth includes the final scalar output
/// layer, which has no activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub n_related: usize,
    pub encoder_depth: usize,
    pub encoder_width: usize,
    pub repr_dim: usize,
    pub relation_depth: usize,
    pub relation_width: usize,
    pub aggregate_depth: usize,
    pub aggregate_width: usize,
    pub head_depth: usize,
    pub head_width: usize,
    pub lambda_aux: f64,
    pub gamma_l2: f64,
    pub dropout_keep: f64,
    pub variant: Variant,
    pub rn_mode: RnMode,
    /// Batch norm after each encoder affine map.
    pub encoder_batch_norm: bool,
    /// Batch norm inside the relation, aggregator and head hidden layers.
    pub rn_batch_norm: bool,
    /// Seeds parameter initialization and dropout streams.
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 213,
            n_related: 3,
            encoder_depth: 15,
            encoder_width: 64,
            repr_dim: 32,
            relation_depth: 3,
            relation_width: 32,
            aggregate_depth: 3,
            aggregate_width: 32,
            head_depth: 2,
            head_width: 32,
            lambda_aux: 1.0,
            gamma_l2: 1e-4,
            dropout_keep: 0.7,
            variant: Variant::DnnRnMtl,
            rn_mode: RnMode::Anchored,
            encoder_batch_norm: true,
            rn_batch_norm: true,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("input_dim", self.input_dim),
            ("encoder_depth", self.encoder_depth),
            ("encoder_width", self.encoder_width),
            ("repr_dim", self.repr_dim),
            ("relation_depth", self.relation_depth),
            ("relation_width", self.relation_width),
            ("aggregate_depth", self.aggregate_depth),
            ("aggregate_width", self.aggregate_width),
            ("head_depth", self.head_depth),
            ("head_width", self.head_width),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be positive")));
        }
        for (name, v) in [("lambda_aux", self.lambda_aux), ("gamma_l2", self.gamma_l2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ModelError::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return Err(ModelError::Config(format!(
                "dropout_keep must lie in (0, 1], got {}",
                self.dropout_keep
            )));
        }
        if self.variant.has_relations() && self.n_related == 0 {
            return Err(ModelError::Config(
                "variant dnn_rn_mtl requires n_related >= 1".to_string(),
            ));
        }
        Ok(())
    }

    /// Width of the vector the heads read.
    pub fn head_input_dim(&self) -> usize {
        if self.variant.has_relations() {
            self.aggregate_width
        } else {
            self.repr_dim
        }
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        Self {
            variant,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reported_architecture() {
        let c = ModelConfig::default();
        assert_eq!(c.encoder_depth, 15);
        assert_eq!(c.n_related, 3);
        assert_eq!(c.relation_depth, 3);
        assert_eq!(c.aggregate_depth, 3);
        c.validate().unwrap();
    }

    #[test]
    fn relation_variant_needs_related_objects() {
        let c = ModelConfig {
            n_related: 0,
            ..ModelConfig::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("n_related"));
        c.with_variant(Variant::DnnMtl).validate().unwrap();
    }

    #[test]
    fn rejects_bad_weights() {
        for bad in [
            ModelConfig { lambda_aux: -1.0, ..ModelConfig::default() },
            ModelConfig { gamma_l2: f64::NAN, ..ModelConfig::default() },
            ModelConfig { dropout_keep: 0.0, ..ModelConfig::default() },
            ModelConfig { head_width: 0, ..ModelConfig::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("rn".parse::<Variant>().is_err());
    }
}
