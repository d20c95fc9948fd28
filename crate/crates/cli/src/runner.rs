//! Executes one algorithm on one scenario and writes the run's artifact
//! directory: round CSV, soft-label CSV, checkpoints, summary and meta JSON.

use std::path::{Path, PathBuf};

use anyhow::Context;
use focus_fl::data_synth::{generate_scenario, Scenario};
use focus_fl::fairness::{fairness_report, ExcessMethod, FairnessReport, Predictor, SURROGATE_BUDGET};
use focus_fl::fl_engine::{run_fedavg, run_fedavg_hardcluster, write_round_log_csv, RoundLog};
use focus_fl::focus_em::{hard_assignment, run_focus, write_pi_csv, FocusCheckpoint};
use focus_fl::models::{ClusterModels, ModelKind, ParamVector};
use focus_fl::ScenarioConfig;
use serde::Serialize;

use crate::manifest::{Algorithm, ExperimentManifest};
use crate::output::{append_summary_csv, write_atomic, write_json_atomic, RunMeta, RunSummary};

/// Everything produced by one `(algorithm, seed)` execution.
pub struct RunArtifacts {
    pub summary: RunSummary,
    pub dir: PathBuf,
}

/// Runs one algorithm on a freshly generated scenario for `seed`, writing
/// artifacts under `out_dir/<algo>_seed<seed>/`. `num_models` overrides the
/// cluster-model count (used by the M sweep); `None` uses the config value.
pub fn execute_run(
    manifest: &ExperimentManifest,
    algo: Algorithm,
    seed: u64,
    repetition: usize,
    out_dir: &Path,
    num_models: Option<usize>,
) -> anyhow::Result<RunArtifacts> {
    let cfg = ScenarioConfig {
        seed,
        ..manifest.scenario.clone()
    };
    cfg.validate()?;
    let scenario = generate_scenario(&cfg)?;
    let model = cfg.model();
    let started = std::time::Instant::now();

    let dir = out_dir.join(format!("{}_seed{}", algo.name(), seed));
    std::fs::create_dir_all(&dir)?;

    let outcome = match algo {
        Algorithm::Fedavg => {
            let run = run_fedavg(&scenario, &cfg)?;
            RunOutcome {
                logs: run.logs,
                snapshots: run.snapshots.into_iter().map(|w| vec![w]).collect(),
                served: Served::Global(run.model),
                starved: Vec::new(),
            }
        }
        Algorithm::Focus => {
            let run = run_focus(&scenario, &cfg, manifest.init_strategy, num_models.unwrap_or(cfg.num_clusters))?;
            let checkpoint = FocusCheckpoint::new(&run, &cfg);
            write_json_atomic(&dir.join("final.json"), &checkpoint)?;
            write_csv(&dir.join("pi.csv"), |buf| write_pi_csv(&run.history, buf))?;
            RunOutcome {
                logs: run.logs,
                snapshots: run
                    .history
                    .model_snapshots
                    .iter()
                    .skip(1)
                    .map(|m| m.weights.clone())
                    .collect(),
                served: Served::Ensemble(run.models, run.pi),
                starved: run.starved_events,
            }
        }
        Algorithm::FedavgHardcluster => {
            // The hard assignment comes from a learned soft clustering: run
            // the EM algorithm first, take the argmax per agent, then train
            // one FedAvg model per hard cluster.
            let soft = run_focus(&scenario, &cfg, manifest.init_strategy, num_models.unwrap_or(cfg.num_clusters))?;
            let assignment = hard_assignment(&soft.pi);
            let run = run_fedavg_hardcluster(&scenario, &assignment, &cfg)?;
            RunOutcome {
                logs: run.logs,
                snapshots: run.snapshots.into_iter().map(|m| m.weights).collect(),
                served: Served::HardCluster(run.models, assignment),
                starved: soft.starved_events,
            }
        }
    };

    write_csv(&dir.join("rounds.csv"), |buf| write_round_log_csv(&outcome.logs, buf))?;
    write_checkpoints(&dir, &outcome.snapshots, manifest.checkpoint_every)?;
    if !matches!(outcome.served, Served::Ensemble(..)) {
        write_json_atomic(&dir.join("final.json"), &FinalModels::from(&outcome.served, &cfg))?;
    }

    let predictor = outcome.served.predictor();
    let report_surrogate = fairness_report(predictor, &scenario, model, ExcessMethod::Surrogate, SURROGATE_BUDGET)?;
    let report_analytic = match model {
        ModelKind::LinearRegression => Some(fairness_report(
            predictor,
            &scenario,
            model,
            ExcessMethod::AnalyticLinear,
            SURROGATE_BUDGET,
        )?),
        ModelKind::RidgeLogistic { .. } => None,
    };
    let summary = build_summary(algo, seed, repetition, &cfg, manifest, report_surrogate, report_analytic, outcome.starved);
    write_json_atomic(&dir.join("summary.json"), &summary)?;
    write_json_atomic(&dir.join("meta.json"), &RunMeta::capture(started.elapsed().as_secs_f64()))?;
    Ok(RunArtifacts { summary, dir })
}

/// Runs every `(algorithm, repetition)` pair of the manifest and appends to
/// the shared summary CSV.
pub fn execute_all(manifest: &ExperimentManifest, out_dir: &Path) -> anyhow::Result<Vec<RunArtifacts>> {
    let mut artifacts = Vec::new();
    for repetition in 0..manifest.repetitions {
        let seed = manifest.scenario.seed + repetition as u64;
        for &algo in &manifest.algorithms {
            let run = execute_run(manifest, algo, seed, repetition, out_dir, None)
                .with_context(|| format!("running {} (seed {seed})", algo.name()))?;
            append_summary_csv(&out_dir.join("summary.csv"), &[&run.summary])?;
            artifacts.push(run);
        }
    }
    Ok(artifacts)
}

struct RunOutcome {
    logs: Vec<RoundLog>,
    /// Per round: all cluster models (a single entry for FedAvg).
    snapshots: Vec<Vec<ParamVector>>,
    served: Served,
    starved: Vec<(usize, usize)>,
}

/// The serving arrangement produced by an algorithm.
enum Served {
    Global(ParamVector),
    Ensemble(ClusterModels, focus_fl::SoftLabelMatrix),
    HardCluster(ClusterModels, Vec<usize>),
}

impl Served {
    fn predictor(&self) -> Predictor<'_> {
        match self {
            Served::Global(w) => Predictor::Global(w),
            Served::Ensemble(models, pi) => Predictor::Ensemble { models, pi },
            Served::HardCluster(models, assignment) => Predictor::HardCluster { models, assignment },
        }
    }
}

#[derive(Serialize)]
struct FinalModels<'a> {
    weights: Vec<Vec<f64>>,
    assignment: Option<&'a [usize]>,
    config: &'a ScenarioConfig,
    seed: u64,
}

impl<'a> FinalModels<'a> {
    fn from(served: &'a Served, cfg: &'a ScenarioConfig) -> Self {
        let (weights, assignment) = match served {
            Served::Global(w) => (vec![w.0.to_vec()], None),
            Served::HardCluster(models, assignment) => {
                (models.weights.iter().map(|w| w.0.to_vec()).collect(), Some(assignment.as_slice()))
            }
            Served::Ensemble(..) => unreachable!("ensemble uses FocusCheckpoint"),
        };
        Self {
            weights,
            assignment,
            config: cfg,
            seed: cfg.seed,
        }
    }
}

#[derive(Serialize)]
struct Checkpoint<'a> {
    round: usize,
    weights: Vec<&'a [f64]>,
}

fn write_checkpoints(dir: &Path, snapshots: &[Vec<ParamVector>], every: usize) -> anyhow::Result<()> {
    let ckpt_dir = dir.join("checkpoints");
    for (index, models) in snapshots.iter().enumerate() {
        let round = index + 1;
        if round % every == 0 {
            let doc = Checkpoint {
                round,
                weights: models.iter().map(|w| w.as_slice()).collect(),
            };
            write_json_atomic(&ckpt_dir.join(format!("round_{round:04}.json")), &doc)?;
        }
    }
    Ok(())
}

fn write_csv<F>(path: &Path, fill: F) -> anyhow::Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> focus_fl::Result<()>,
{
    let mut buf = Vec::new();
    fill(&mut buf)?;
    write_atomic(path, &buf)
}

#[allow(clippy::too_many_arguments)]
fn build_summary(
    algo: Algorithm,
    seed: u64,
    repetition: usize,
    cfg: &ScenarioConfig,
    manifest: &ExperimentManifest,
    report_surrogate: FairnessReport,
    report_analytic: Option<FairnessReport>,
    starved: Vec<(usize, usize)>,
) -> RunSummary {
    let avg_test_loss =
        report_surrogate.per_agent_loss.iter().sum::<f64>() / report_surrogate.per_agent_loss.len() as f64;
    RunSummary {
        algo: algo.name(),
        seed,
        repetition,
        faa: report_surrogate.faa,
        avg_test_loss,
        agnostic_loss: report_surrogate.agnostic_loss,
        accuracy_parity_std: report_surrogate.accuracy_parity_std,
        config: cfg.clone(),
        init_strategy: manifest.init_strategy,
        report_surrogate,
        report_analytic,
        starved_clusters: starved,
    }
}

/// Generates the scenario for a manifest (used by `synth` and the theorem
/// checks).
pub fn scenario_for(manifest: &ExperimentManifest, seed: u64) -> anyhow::Result<(ScenarioConfig, Scenario)> {
    let cfg = ScenarioConfig {
        seed,
        ..manifest.scenario.clone()
    };
    cfg.validate()?;
    let scenario = generate_scenario(&cfg)?;
    Ok((cfg, scenario))
}
