//! Parameter sweeps: one run per `(value, repetition)` with everything else
//! held at the manifest configuration.

use std::path::Path;

use anyhow::Context;
use focus_fl::{Error as CoreError, ScenarioConfig};

use crate::manifest::ExperimentManifest;
use crate::output::write_atomic;
use crate::runner::execute_run;

fn config_error(field: &'static str, reason: impl Into<String>) -> anyhow::Error {
    CoreError::InvalidConfig {
        field,
        reason: reason.into(),
    }
    .into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Number of cluster models trained; the generated data stays fixed at
    /// the manifest scenario so the sweep isolates the algorithm's M.
    NumModels,
    LocalSteps,
    LearningRate,
    NumAgents,
    IntraRadius,
    InterDistance,
}

impl SweepParam {
    pub fn parse(name: &str) -> anyhow::Result<Self> {
        Ok(match name {
            "M" => SweepParam::NumModels,
            "K" => SweepParam::LocalSteps,
            "eta" => SweepParam::LearningRate,
            "E" => SweepParam::NumAgents,
            "r" => SweepParam::IntraRadius,
            "R" => SweepParam::InterDistance,
            other => {
                return Err(config_error(
                    "param",
                    format!("unknown sweep parameter `{other}` (expected one of M, K, eta, E, r, R)"),
                ))
            }
        })
    }
}

pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub repetition: usize,
    pub seed: u64,
    pub algo: &'static str,
    pub avg_loss: f64,
    pub faa: f64,
    pub agnostic: f64,
}

pub fn run_sweep(
    manifest: &ExperimentManifest,
    param_name: &str,
    values: &[f64],
    out_dir: &Path,
) -> anyhow::Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(config_error("values", "sweep over an empty value list"));
    }
    let param = SweepParam::parse(param_name)?;
    let mut rows = Vec::new();
    for &value in values {
        let (point_manifest, num_models) = apply(manifest, param, value)?;
        for repetition in 0..manifest.repetitions {
            let seed = manifest.scenario.seed + repetition as u64;
            for &algo in &point_manifest.algorithms {
                let point_dir = out_dir.join(format!("{param_name}_{value}"));
                let run = execute_run(&point_manifest, algo, seed, repetition, &point_dir, num_models)
                    .with_context(|| format!("sweep point {param_name}={value}, seed {seed}"))?;
                rows.push(SweepRow {
                    param: param_name.to_string(),
                    value,
                    repetition,
                    seed,
                    algo: algo.name(),
                    avg_loss: run.summary.avg_test_loss,
                    faa: run.summary.faa,
                    agnostic: run.summary.agnostic_loss,
                });
            }
        }
    }
    write_sweep_csv(&out_dir.join("sweep.csv"), &rows)?;
    Ok(rows)
}

fn apply(manifest: &ExperimentManifest, param: SweepParam, value: f64) -> anyhow::Result<(ExperimentManifest, Option<usize>)> {
    let mut out = manifest.clone();
    let mut num_models = None;
    let as_usize = |value: f64, name: &str| -> anyhow::Result<usize> {
        if value.fract() != 0.0 || value < 1.0 {
            return Err(config_error("values", format!("sweep value {value} for {name} must be a positive integer")));
        }
        Ok(value as usize)
    };
    match param {
        SweepParam::NumModels => num_models = Some(as_usize(value, "M")?),
        SweepParam::LocalSteps => out.scenario.local_steps = as_usize(value, "K")?,
        SweepParam::LearningRate => out.scenario.learning_rate = value,
        SweepParam::NumAgents => out.scenario.num_agents = as_usize(value, "E")?,
        SweepParam::IntraRadius => out.scenario.intra_radius = value,
        SweepParam::InterDistance => out.scenario.inter_distance = value,
    }
    ScenarioConfig::validate(&out.scenario)?;
    Ok((out, num_models))
}

fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> anyhow::Result<()> {
    let mut text = String::from("# schema=1\nparam,value,repetition,seed,algo,avg_loss,faa,agnostic\n");
    for row in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.param, row.value, row.repetition, row.seed, row.algo, row.avg_loss, row.faa, row.agnostic
        ));
    }
    write_atomic(path, text.as_bytes())
}
