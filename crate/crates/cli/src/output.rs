//! Output-file helpers: atomic writes and the run summary schema.

use std::io::Write;
use std::path::Path;

use anyhow::Context;
use focus_fl::fairness::FairnessReport;
use focus_fl::fl_engine::InitStrategy;
use focus_fl::ScenarioConfig;
use serde::Serialize;

/// Writes via a temp file in the target directory followed by a rename, so
/// readers never observe a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile_path(path);
    let mut attempts = 0;
    while tmp.exists() {
        attempts += 1;
        tmp = path.with_extension(format!("tmp{attempts}"));
    }
    {
        let mut file = std::fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn tempfile_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("tmp")
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Deterministic run summary. Everything in here is a pure function of
/// `(config, flags, seed)`; wall-clock data goes to `meta.json` instead.
#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub algo: &'static str,
    pub seed: u64,
    pub repetition: usize,
    /// Headline fairness score (surrogate excess risks, clamped spread).
    pub faa: f64,
    pub avg_test_loss: f64,
    pub agnostic_loss: f64,
    pub accuracy_parity_std: Option<f64>,
    /// Fully resolved scenario (defaults materialized).
    pub config: ScenarioConfig,
    pub init_strategy: InitStrategy,
    pub report_surrogate: FairnessReport,
    /// Closed-form excess-risk report; present for linear-model runs.
    pub report_analytic: Option<FairnessReport>,
    /// `(round, cluster)` pairs where aggregation mass fell below threshold.
    pub starved_clusters: Vec<(usize, usize)>,
}

/// Non-deterministic companion to the summary.
#[derive(Debug, Serialize)]
pub struct RunMeta {
    pub unix_timestamp_secs: u64,
    pub wall_time_secs: f64,
    pub threads: usize,
}

impl RunMeta {
    pub fn capture(wall_time_secs: f64) -> Self {
        Self {
            unix_timestamp_secs: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            wall_time_secs,
            threads: rayon::current_num_threads(),
        }
    }
}

/// Appends `algo,seed,avg_loss,faa,agnostic,acc_parity` rows to the shared
/// summary CSV, creating it (with header) on first use.
pub fn append_summary_csv(path: &Path, rows: &[&RunSummary]) -> anyhow::Result<()> {
    let mut text = if path.exists() {
        std::fs::read_to_string(path)?
    } else {
        "# schema=1\nalgo,seed,avg_loss,faa,agnostic,acc_parity\n".to_string()
    };
    for summary in rows {
        let parity = summary.accuracy_parity_std.map(|v| v.to_string()).unwrap_or_default();
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            summary.algo, summary.seed, summary.avg_test_loss, summary.faa, summary.agnostic_loss, parity
        ));
    }
    write_atomic(path, text.as_bytes())
}
