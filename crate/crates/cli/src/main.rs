//! `focus-fl`: config-driven front end for the clustered federated learning
//! simulator.
//!
//! Subcommands: `synth` (write datasets), `run` (train and report),
//! `theorem-check` (convergence/fairness verdicts), `sweep` (parameter
//! sweeps). Exit codes: 0 success, 2 configuration error, 3 numeric
//! divergence, 4 theorem-check failure.

mod manifest;
mod output;
mod runner;
mod sweep;
mod theorem;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use focus_fl::Error as CoreError;

use manifest::{Algorithm, ExperimentManifest};
use output::{write_atomic, write_json_atomic};
use theorem::TheoremCheck;

const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;
const EXIT_THEOREM: u8 = 4;

#[derive(Parser)]
#[command(name = "focus-fl", version, about = "Deterministic clustered federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the scenario's datasets as per-agent CSV files.
    Synth {
        /// Experiment config (flat JSON); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Base RNG seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the selected algorithm(s) and write logs and fairness reports.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Algorithm to run; `all` runs fedavg, focus, and the hard-cluster
        /// baseline.
        #[arg(long)]
        algo: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of repetitions; repetition i uses seed + i.
        #[arg(long)]
        repetitions: Option<usize>,
    },
    /// Verify convergence (thm1) or the closed-form fairness gap (thm3).
    TheoremCheck {
        #[arg(long, value_enum)]
        which: TheoremCheck,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run the experiment across a parameter grid.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// One of M, K, eta, E, r, R.
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. `--values 1,2,3,4`.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        repetitions: Option<usize>,
    },
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}

/// FOCUS_FL_THREADS caps the worker pool; unset leaves the rayon default.
fn init_thread_pool() {
    if let Ok(value) = std::env::var("FOCUS_FL_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
            }
        }
    }
}

fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<CoreError>() {
            return match core {
                CoreError::DivergenceDetected { .. } => EXIT_DIVERGENCE,
                CoreError::InvalidConfig { .. }
                | CoreError::CenterPlacementFailed { .. }
                | CoreError::DimensionMismatch { .. }
                | CoreError::EmptyCluster(_)
                | CoreError::UnsupportedEvaluation(_) => EXIT_CONFIG,
                CoreError::Io(_) | CoreError::Json(_) => 1,
            };
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return EXIT_CONFIG;
        }
    }
    1
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Synth { config, seed, out } => {
            let manifest = load(config.as_deref(), seed, out, None)?;
            manifest.validate()?;
            cmd_synth(&manifest)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Run {
            config,
            algo,
            seed,
            out,
            repetitions,
        } => {
            let mut manifest = load(config.as_deref(), seed, out, repetitions)?;
            if let Some(algo) = algo {
                manifest.algorithms = parse_algorithms(&algo)?;
            }
            manifest.validate()?;
            let out_dir = manifest.output_dir.clone();
            let runs = runner::execute_all(&manifest, &out_dir)?;
            for run in &runs {
                println!(
                    "{} seed={} faa={:.6} avg_loss={:.6} -> {}",
                    run.summary.algo,
                    run.summary.seed,
                    run.summary.faa,
                    run.summary.avg_test_loss,
                    run.dir.display()
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::TheoremCheck { which, config, seed, out } => {
            let manifest = load(config.as_deref(), seed, out, None)?;
            manifest.validate()?;
            let verdict = theorem::theorem_check(which, &manifest, manifest.scenario.seed)?;
            let path = manifest.output_dir.join(format!("{}_verdict.json", verdict.which));
            write_json_atomic(&path, &verdict)?;
            for check in &verdict.checks {
                println!(
                    "{}: {} (value {:.6e} {} {:.6e})",
                    check.name,
                    if check.passed { "pass" } else { "FAIL" },
                    check.value,
                    check.direction,
                    check.threshold
                );
            }
            println!("{}: {} -> {}", verdict.which, if verdict.passed { "pass" } else { "FAIL" }, path.display());
            if verdict.passed {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(EXIT_THEOREM))
            }
        }
        Command::Sweep {
            config,
            param,
            values,
            seed,
            out,
            repetitions,
        } => {
            let manifest = load(config.as_deref(), seed, out, repetitions)?;
            manifest.validate()?;
            let out_dir = manifest.output_dir.clone();
            let rows = sweep::run_sweep(&manifest, &param, &values, &out_dir)?;
            for row in &rows {
                println!(
                    "{}={} seed={} algo={} faa={:.6} avg_loss={:.6}",
                    row.param, row.value, row.seed, row.algo, row.faa, row.avg_loss
                );
            }
            println!("-> {}", out_dir.join("sweep.csv").display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load(
    config: Option<&std::path::Path>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    repetitions: Option<usize>,
) -> anyhow::Result<ExperimentManifest> {
    let mut manifest = ExperimentManifest::load(config)?;
    if let Some(seed) = seed {
        manifest.scenario.seed = seed;
    }
    if let Some(out) = out {
        manifest.output_dir = out;
    }
    if let Some(repetitions) = repetitions {
        manifest.repetitions = repetitions;
    }
    Ok(manifest)
}

fn parse_algorithms(text: &str) -> anyhow::Result<Vec<Algorithm>> {
    if text == "all" {
        return Ok(vec![Algorithm::Fedavg, Algorithm::Focus, Algorithm::FedavgHardcluster]);
    }
    text.split(',')
        .map(|name| match name {
            "fedavg" => Ok(Algorithm::Fedavg),
            "focus" => Ok(Algorithm::Focus),
            "fedavg_hardcluster" => Ok(Algorithm::FedavgHardcluster),
            other => Err(CoreError::InvalidConfig {
                field: "algo",
                reason: format!("unknown algorithm `{other}` (expected fedavg, focus, fedavg_hardcluster, or all)"),
            }
            .into()),
        })
        .collect()
}

/// Writes the per-agent training datasets and a manifest with the resolved
/// configuration.
fn cmd_synth(manifest: &ExperimentManifest) -> anyhow::Result<()> {
    let (cfg, scenario) = runner::scenario_for(manifest, manifest.scenario.seed)?;
    let dir = manifest.output_dir.join("agents");
    std::fs::create_dir_all(&dir)?;
    let mut agents = Vec::new();
    for (e, data) in scenario.train.iter().enumerate() {
        let file = format!("agent_{e:02}.csv");
        let mut buf = Vec::new();
        data.write_csv(&mut buf)?;
        write_atomic(&dir.join(&file), &buf)?;
        agents.push(serde_json::json!({
            "file": format!("agents/{file}"),
            "samples": data.num_samples(),
            "true_cluster": data.true_cluster,
        }));
    }
    let doc = serde_json::json!({
        "config": cfg,
        "seed": cfg.seed,
        "agents": agents,
    });
    write_json_atomic(&manifest.output_dir.join("manifest.json"), &doc)?;
    println!("wrote {} agent files -> {}", scenario.train.len(), dir.display());
    Ok(())
}
