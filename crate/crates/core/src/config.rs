//! Experiment configuration.
//!
//! `ScenarioConfig` is the single flat description of an experiment; it
//! serializes to a flat JSON object and is embedded verbatim (with defaults
//! materialized) in every summary the harness writes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelKind;

/// Loss family selector as it appears in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKindTag {
    LinearRegression,
    RidgeLogistic,
}

/// Shape of the generated heterogeneity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// `E - 1` agents share one cluster; the last agent sits at distance
    /// `inter_distance` from their center.
    SingleOutlier,
    /// `num_clusters` ground-truth clusters with one dominant cluster and
    /// minority clusters of sizes `num_clusters-1, ..., 2, 1`.
    MultiCluster,
}

/// Ridge strength used whenever `model_kind = ridge_logistic`; keeps the
/// logistic loss strongly convex.
pub const DEFAULT_RIDGE_LAMBDA: f64 = 0.1;

/// Full experiment description. Field names are the config-file schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Number of agents E.
    #[serde(default = "defaults::num_agents")]
    pub num_agents: usize,
    /// Number of clusters M (models trained; ground-truth clusters for the
    /// multi-cluster scenario).
    #[serde(default = "defaults::num_clusters")]
    pub num_clusters: usize,
    /// Feature dimension d.
    #[serde(default = "defaults::dimension")]
    pub dimension: usize,
    /// Intra-cluster radius r: agent optima lie within r of their center.
    #[serde(default = "defaults::intra_radius")]
    pub intra_radius: f64,
    /// Inter-cluster distance R: centers are pairwise at least R apart.
    #[serde(default = "defaults::inter_distance")]
    pub inter_distance: f64,
    /// Feature standard deviation delta.
    #[serde(default = "defaults::feature_std")]
    pub feature_std: f64,
    /// Label noise standard deviation sigma.
    #[serde(default = "defaults::noise_std")]
    pub noise_std: f64,
    /// Training samples per agent n_e (evaluation sets are the same size).
    #[serde(default = "defaults::samples_per_agent")]
    pub samples_per_agent: usize,
    /// Communication rounds T.
    #[serde(default = "defaults::rounds")]
    pub rounds: usize,
    /// Local full-batch gradient steps K per round.
    #[serde(default = "defaults::local_steps")]
    pub local_steps: usize,
    /// Learning rate eta.
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    /// Base RNG seed; every random stream is keyed from it.
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default = "defaults::model_kind")]
    pub model_kind: ModelKindTag,
    #[serde(default = "defaults::scenario_kind")]
    pub scenario_kind: ScenarioKind,
}

mod defaults {
    use super::{ModelKindTag, ScenarioKind};

    pub fn num_agents() -> usize {
        10
    }
    pub fn num_clusters() -> usize {
        2
    }
    pub fn dimension() -> usize {
        20
    }
    pub fn intra_radius() -> f64 {
        0.01
    }
    pub fn inter_distance() -> f64 {
        1.0
    }
    pub fn feature_std() -> f64 {
        1.0
    }
    pub fn noise_std() -> f64 {
        0.1
    }
    pub fn samples_per_agent() -> usize {
        1000
    }
    pub fn rounds() -> usize {
        100
    }
    pub fn local_steps() -> usize {
        10
    }
    pub fn learning_rate() -> f64 {
        0.05
    }
    pub fn seed() -> u64 {
        1
    }
    pub fn model_kind() -> ModelKindTag {
        ModelKindTag::LinearRegression
    }
    pub fn scenario_kind() -> ScenarioKind {
        ScenarioKind::SingleOutlier
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults are complete")
    }
}

impl ScenarioConfig {
    /// Materialized loss model for this config.
    pub fn model(&self) -> ModelKind {
        match self.model_kind {
            ModelKindTag::LinearRegression => ModelKind::LinearRegression,
            ModelKindTag::RidgeLogistic => ModelKind::RidgeLogistic {
                ridge_lambda: DEFAULT_RIDGE_LAMBDA,
            },
        }
    }

    /// Checks every documented field constraint; returns the first violation.
    pub fn validate(&self) -> Result<()> {
        fn fail(field: &'static str, reason: impl Into<String>) -> Result<()> {
            Err(Error::InvalidConfig {
                field,
                reason: reason.into(),
            })
        }
        if self.num_agents < 2 {
            return fail("num_agents", "E >= 2 required");
        }
        if self.num_clusters < 1 {
            return fail("num_clusters", "M >= 1 required");
        }
        if self.dimension < 1 {
            return fail("dimension", "d >= 1 required");
        }
        if !self.intra_radius.is_finite() || self.intra_radius < 0.0 {
            return fail("intra_radius", "r must be finite and >= 0");
        }
        if !self.inter_distance.is_finite() || self.inter_distance <= 0.0 {
            return fail("inter_distance", "R must be finite and > 0");
        }
        if self.intra_radius >= self.inter_distance / 2.0 {
            return fail("intra_radius", "r < R/2 required for separability");
        }
        if !self.feature_std.is_finite() || self.feature_std <= 0.0 {
            return fail("feature_std", "delta must be finite and > 0");
        }
        if !self.noise_std.is_finite() || self.noise_std < 0.0 {
            return fail("noise_std", "sigma must be finite and >= 0");
        }
        if self.samples_per_agent < 1 {
            return fail("samples_per_agent", "n_e >= 1 required");
        }
        if self.rounds < 1 {
            return fail("rounds", "T >= 1 required");
        }
        if self.local_steps < 1 {
            return fail("local_steps", "K >= 1 required");
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return fail("learning_rate", "eta must be finite and > 0");
        }
        match self.scenario_kind {
            ScenarioKind::SingleOutlier => {
                if self.num_agents < 3 {
                    return fail("num_agents", "E > 2 required for the single-outlier scenario");
                }
            }
            ScenarioKind::MultiCluster => {
                let minority: usize = (1..self.num_clusters).sum();
                let majority = self.num_agents.saturating_sub(minority);
                if majority < self.num_clusters.saturating_sub(1).max(1) {
                    return fail(
                        "num_agents",
                        format!(
                            "E = {} too small for {} clusters with minority sizes 1..{}",
                            self.num_agents,
                            self.num_clusters,
                            self.num_clusters.saturating_sub(1)
                        ),
                    );
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ScenarioConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.num_agents, 10);
        assert_eq!(cfg.dimension, 20);
        assert_eq!(cfg.intra_radius, 0.01);
        assert_eq!(cfg.inter_distance, 1.0);
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        // Flat object with the documented field names.
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in [
            "num_agents",
            "num_clusters",
            "dimension",
            "intra_radius",
            "inter_distance",
            "feature_std",
            "noise_std",
            "samples_per_agent",
            "rounds",
            "local_steps",
            "learning_rate",
            "seed",
            "model_kind",
            "scenario_kind",
        ] {
            assert!(value.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn rejects_bad_fields() {
        let cfg = ScenarioConfig {
            intra_radius: 0.6,
            ..ScenarioConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig { field: "intra_radius", .. })));

        // The single-outlier scenario needs E > 2.
        let cfg = ScenarioConfig {
            num_agents: 2,
            ..ScenarioConfig::default()
        };
        assert!(cfg.validate().is_err());

        let cfg = ScenarioConfig {
            learning_rate: 0.0,
            ..ScenarioConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = serde_json::from_str::<ScenarioConfig>(r#"{"rounds": 5, "typo_field": 1}"#);
        assert!(err.is_err());
    }
}
