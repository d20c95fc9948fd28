//! Experiment manifest: one flat JSON file describing the scenario plus the
//! harness knobs. Command-line flags override manifest fields, which in turn
//! override the built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::Context;
use focus_fl::fl_engine::InitStrategy;
use focus_fl::ScenarioConfig;
use serde::{Deserialize, Serialize};

/// Algorithm selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum Algorithm {
    Fedavg,
    Focus,
    FedavgHardcluster,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Fedavg => "fedavg",
            Algorithm::Focus => "focus",
            Algorithm::FedavgHardcluster => "fedavg_hardcluster",
        }
    }
}

/// Full experiment description: scenario fields inline (flat), harness
/// fields alongside.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentManifest {
    #[serde(flatten)]
    pub scenario: ScenarioConfig,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_init_strategy")]
    pub init_strategy: InitStrategy,
    /// Model checkpoints are written every this many rounds.
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
}

fn default_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::Focus]
}

fn default_repetitions() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_init_strategy() -> InitStrategy {
    InitStrategy::LocalFit
}

fn default_checkpoint_every() -> usize {
    10
}

impl Default for ExperimentManifest {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults are complete")
    }
}

/// The flat scenario fields of a manifest file.
const SCENARIO_KEYS: &[&str] = &[
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
];

/// The harness fields of a manifest file.
const HARNESS_KEYS: &[&str] = &[
    "algorithms",
    "repetitions",
    "output_dir",
    "init_strategy",
    "checkpoint_every",
];

/// Harness fields parsed on their own (`serde(flatten)` would swallow both
/// unknown-field detection and error paths).
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HarnessFields {
    #[serde(default = "default_algorithms")]
    algorithms: Vec<Algorithm>,
    #[serde(default = "default_repetitions")]
    repetitions: usize,
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
    #[serde(default = "default_init_strategy")]
    init_strategy: InitStrategy,
    #[serde(default = "default_checkpoint_every")]
    checkpoint_every: usize,
}

impl ExperimentManifest {
    /// Loads a manifest, or the defaults when no path is given.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let manifest = match path {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))?
            }
            None => Self::default(),
        };
        Ok(manifest)
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let object = value.as_object().ok_or_else(|| focus_fl::Error::InvalidConfig {
            field: "config",
            reason: "config must be a JSON object".into(),
        })?;
        for key in object.keys() {
            if !SCENARIO_KEYS.contains(&key.as_str()) && !HARNESS_KEYS.contains(&key.as_str()) {
                return Err(focus_fl::Error::InvalidConfig {
                    field: "config",
                    reason: format!("unknown field `{key}`"),
                }
                .into());
            }
        }
        let pick = |keys: &[&str]| {
            serde_json::Value::Object(
                object
                    .iter()
                    .filter(|(key, _)| keys.contains(&key.as_str()))
                    .map(|(key, value)| (key.clone(), value.clone()))
                    .collect(),
            )
        };
        // Deserialize through a path tracker so type errors name the field.
        let field_error = |err: serde_path_to_error::Error<serde_json::Error>| focus_fl::Error::InvalidConfig {
            field: "config",
            reason: format!("field `{}`: {}", err.path(), err.inner()),
        };
        let scenario: ScenarioConfig = serde_path_to_error::deserialize(pick(SCENARIO_KEYS)).map_err(field_error)?;
        let harness: HarnessFields = serde_path_to_error::deserialize(pick(HARNESS_KEYS)).map_err(field_error)?;
        Ok(Self {
            scenario,
            algorithms: harness.algorithms,
            repetitions: harness.repetitions,
            output_dir: harness.output_dir,
            init_strategy: harness.init_strategy,
            checkpoint_every: harness.checkpoint_every,
        })
    }

    pub fn validate(&self) -> focus_fl::Result<()> {
        self.scenario.validate()?;
        if self.repetitions < 1 {
            return Err(focus_fl::Error::InvalidConfig {
                field: "repetitions",
                reason: "repetitions >= 1 required".into(),
            });
        }
        if self.checkpoint_every < 1 {
            return Err(focus_fl::Error::InvalidConfig {
                field: "checkpoint_every",
                reason: "checkpoint_every >= 1 required".into(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_manifest_parses_scenario_and_harness_fields() {
        let manifest = ExperimentManifest::parse(
            r#"{"num_agents": 12, "rounds": 7, "algorithms": ["fedavg", "focus"], "repetitions": 3, "init_strategy": "oracle_perturbed"}"#,
        )
        .unwrap();
        assert_eq!(manifest.scenario.num_agents, 12);
        assert_eq!(manifest.scenario.rounds, 7);
        assert_eq!(manifest.algorithms, vec![Algorithm::Fedavg, Algorithm::Focus]);
        assert_eq!(manifest.repetitions, 3);
        assert_eq!(manifest.init_strategy, InitStrategy::OraclePerturbed);
        assert_eq!(manifest.checkpoint_every, 10);
        manifest.validate().unwrap();
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = ExperimentManifest::parse(r#"{"no_such_field": 1}"#).unwrap_err();
        assert!(err.to_string().contains("no_such_field"));
    }
}
