//! EM-clustered federated learning.
//!
//! Each communication round first updates the soft cluster labels from the
//! agents' mean training losses under every cluster model (E step), then
//! runs per-cluster federated local SGD and aggregates each cluster model
//! with the soft labels as weights (M step). Inference ensembles the cluster
//! models with an agent's label row; unseen agents obtain a one-shot label
//! from a single E-step application.

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::data_synth::{AgentDataset, ClusterSpec, Scenario};
use crate::error::{Error, Result};
use crate::fl_engine::{init_models, local_sgd, weighted_average, InitStrategy, RoundLog};
use crate::models::{ensemble_pointwise_loss, pointwise_loss, predict, ClusterModels, ModelKind, ParamVector, Prediction};

/// A cluster whose total soft-label mass falls below this keeps its previous
/// model for the round (the aggregation would be 0/0).
pub const EPSILON_MASS: f64 = 1e-8;

/// Row-stochastic matrix of soft cluster labels `pi[e][m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelMatrix {
    pi: Array2<f64>,
}

impl SoftLabelMatrix {
    /// Uniform prior `pi = 1/M`.
    pub fn uniform(num_agents: usize, num_models: usize) -> Self {
        assert!(num_agents >= 1 && num_models >= 1);
        Self {
            pi: Array2::from_elem((num_agents, num_models), 1.0 / num_models as f64),
        }
    }

    /// Builds from rows, validating row-stochasticity.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let num_agents = rows.len();
        let num_models = rows.first().map(Vec::len).unwrap_or(0);
        let mut pi = Array2::zeros((num_agents, num_models));
        for (e, row) in rows.iter().enumerate() {
            if row.len() != num_models {
                return Err(Error::DimensionMismatch {
                    expected: num_models,
                    got: row.len(),
                });
            }
            for (m, &value) in row.iter().enumerate() {
                pi[(e, m)] = value;
            }
        }
        let matrix = Self { pi };
        matrix.check_rows()?;
        Ok(matrix)
    }

    pub fn num_agents(&self) -> usize {
        self.pi.nrows()
    }

    pub fn num_models(&self) -> usize {
        self.pi.ncols()
    }

    pub fn row(&self, agent: usize) -> &[f64] {
        self.pi.row(agent).to_slice().expect("contiguous")
    }

    pub fn as_matrix(&self) -> &Array2<f64> {
        &self.pi
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.num_agents()).map(|e| self.row(e).to_vec()).collect()
    }

    fn check_rows(&self) -> Result<()> {
        for (e, row) in self.pi.rows().into_iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || row.iter().any(|&p| !(0.0..=1.0 + 1e-12).contains(&p)) {
                return Err(Error::InvalidConfig {
                    field: "pi",
                    reason: format!("row {e} is not in the simplex (sum {sum})"),
                });
            }
        }
        Ok(())
    }
}

/// One E step: `pi'_em = pi_em exp(-loss_em) / sum_m' pi_em' exp(-loss_em')`.
///
/// Exponents are shifted by the row's minimum loss over the models that
/// still carry mass, which leaves the update mathematically unchanged but
/// cannot underflow to an all-zero row. Entries with `pi_em = 0` stay zero.
pub fn e_step(pi: &SoftLabelMatrix, losses: &Array2<f64>) -> SoftLabelMatrix {
    assert_eq!(losses.nrows(), pi.num_agents());
    assert_eq!(losses.ncols(), pi.num_models());
    assert!(losses.iter().all(|l| l.is_finite()), "losses must be finite");
    let mut next = pi.pi.clone();
    for (mut row, loss_row) in next.rows_mut().into_iter().zip(losses.rows()) {
        let active_min = row
            .iter()
            .zip(loss_row.iter())
            .filter(|(&p, _)| p > 0.0)
            .map(|(_, &l)| l)
            .fold(f64::INFINITY, f64::min);
        let mut denom = 0.0;
        for (p, &l) in row.iter_mut().zip(loss_row.iter()) {
            if *p > 0.0 {
                *p *= (-(l - active_min)).exp();
                denom += *p;
            }
        }
        row.iter_mut().for_each(|p| *p /= denom);
    }
    SoftLabelMatrix { pi: next }
}

/// One M step: for every cluster, each agent runs `K` local steps from the
/// cluster model and the server aggregates with the soft labels as weights.
/// Clusters with total mass below [`EPSILON_MASS`] keep their model; their
/// indices are returned as starved.
pub fn m_step(
    pi: &SoftLabelMatrix,
    models: &ClusterModels,
    datasets: &[AgentDataset],
    eta: f64,
    steps: usize,
    model: ModelKind,
) -> Result<(ClusterModels, Vec<usize>)> {
    assert_eq!(pi.num_agents(), datasets.len());
    assert_eq!(pi.num_models(), models.num_models());
    let mut weights = Vec::with_capacity(models.num_models());
    let mut starved = Vec::new();
    for m in 0..models.num_models() {
        let mass: f64 = (0..pi.num_agents()).map(|e| pi.row(e)[m]).sum();
        if mass < EPSILON_MASS {
            starved.push(m);
            weights.push(models.weights[m].clone());
            continue;
        }
        let locals: Vec<Result<ParamVector>> = datasets
            .par_iter()
            .map(|data| local_sgd(&models.weights[m], data, eta, steps, model))
            .collect();
        let mut params = Vec::with_capacity(locals.len());
        for (agent, result) in locals.into_iter().enumerate() {
            params.push(result.map_err(|_| Error::DivergenceDetected { round: 0, agent })?);
        }
        let label_weights: Vec<f64> = (0..pi.num_agents()).map(|e| pi.row(e)[m]).collect();
        weights.push(weighted_average(&params, &label_weights));
    }
    Ok((ClusterModels { weights }, starved))
}

/// Per-round records of a FOCUS run, including the initial state
/// (`rounds + 1` snapshots).
#[derive(Debug, Clone)]
pub struct FocusHistory {
    pub pi_snapshots: Vec<SoftLabelMatrix>,
    pub model_snapshots: Vec<ClusterModels>,
    /// Per snapshot: the smallest, over agents, soft-label mass on the
    /// models currently serving the agent's true cluster.
    pub min_correct_pi: Vec<f64>,
    /// Per snapshot and model: distance to the nearest true center.
    pub model_center_distances: Vec<Vec<f64>>,
}

impl FocusHistory {
    pub fn num_snapshots(&self) -> usize {
        self.pi_snapshots.len()
    }
}

/// A starved-cluster event: `(round, cluster)`.
pub type StarvedEvent = (usize, usize);

/// Outcome of a FOCUS run.
#[derive(Debug, Clone)]
pub struct FocusRun {
    pub models: ClusterModels,
    pub pi: SoftLabelMatrix,
    pub history: FocusHistory,
    pub logs: Vec<RoundLog>,
    pub starved_events: Vec<StarvedEvent>,
}

/// Runs `T` EM rounds with `num_models` cluster models (E step first, from
/// the uniform prior, then M step — both per communication round).
pub fn run_focus(scenario: &Scenario, cfg: &ScenarioConfig, init: InitStrategy, num_models: usize) -> Result<FocusRun> {
    assert!(num_models >= 1);
    let model = cfg.model();
    let num_agents = scenario.num_agents();
    let mut models = init_models(init, num_models, scenario, cfg, 0)?;
    let mut pi = SoftLabelMatrix::uniform(num_agents, num_models);

    let mut history = FocusHistory {
        pi_snapshots: Vec::with_capacity(cfg.rounds + 1),
        model_snapshots: Vec::with_capacity(cfg.rounds + 1),
        min_correct_pi: Vec::with_capacity(cfg.rounds + 1),
        model_center_distances: Vec::with_capacity(cfg.rounds + 1),
    };
    record_snapshot(&mut history, &pi, &models, scenario);

    let mut logs = Vec::with_capacity(cfg.rounds);
    let mut starved_events = Vec::new();
    for round in 0..cfg.rounds {
        let start = std::time::Instant::now();
        let losses = training_loss_matrix(&models, &scenario.train, model)?;
        pi = e_step(&pi, &losses);
        let (next, starved) = m_step(&pi, &models, &scenario.train, cfg.learning_rate, cfg.local_steps, model)
            .map_err(|err| match err {
                Error::DivergenceDetected { agent, .. } => Error::DivergenceDetected { round: round + 1, agent },
                other => other,
            })?;
        models = next;
        starved_events.extend(starved.into_iter().map(|m| (round + 1, m)));

        let train = ensemble_losses(&models, &pi, &scenario.train, model)?;
        let test = ensemble_losses(&models, &pi, &scenario.eval, model)?;
        logs.push(RoundLog {
            round: round + 1,
            per_agent_train_loss: train,
            per_agent_test_loss: test,
            model_snapshot_norms: models.weights.iter().map(ParamVector::norm).collect(),
            wall_time_secs: start.elapsed().as_secs_f64(),
        });
        record_snapshot(&mut history, &pi, &models, scenario);
    }
    Ok(FocusRun {
        models,
        pi,
        history,
        logs,
        starved_events,
    })
}

/// Mean training loss of every cluster model on every agent's data.
pub fn training_loss_matrix(models: &ClusterModels, datasets: &[AgentDataset], model: ModelKind) -> Result<Array2<f64>> {
    let num_models = models.num_models();
    let rows: Vec<Result<Vec<f64>>> = datasets
        .par_iter()
        .map(|data| (0..num_models).map(|m| pointwise_loss(model, &models.weights[m], data)).collect())
        .collect();
    let mut losses = Array2::zeros((datasets.len(), num_models));
    for (e, row) in rows.into_iter().enumerate() {
        for (m, value) in row?.into_iter().enumerate() {
            losses[(e, m)] = value;
        }
    }
    Ok(losses)
}

fn ensemble_losses(models: &ClusterModels, pi: &SoftLabelMatrix, datasets: &[AgentDataset], model: ModelKind) -> Result<Vec<f64>> {
    datasets
        .iter()
        .enumerate()
        .map(|(e, data)| ensemble_pointwise_loss(model, &models.weights, pi.row(e), data))
        .collect()
}

/// Ensemble prediction `sum_m pi_m h_{w_m}(x)`.
pub fn ensemble_predict(models: &ClusterModels, pi_row: &[f64], x: &Array1<f64>, model: ModelKind) -> Prediction {
    assert_eq!(models.num_models(), pi_row.len());
    match model {
        ModelKind::LinearRegression => {
            let mut pred = 0.0;
            for (w, &pi) in models.weights.iter().zip(pi_row.iter()) {
                match predict(model, w, x) {
                    Prediction::Scalar(v) => pred += pi * v,
                    Prediction::Probs(_) => unreachable!(),
                }
            }
            Prediction::Scalar(pred)
        }
        ModelKind::RidgeLogistic { .. } => {
            let mut probs = vec![0.0; 2];
            for (w, &pi) in models.weights.iter().zip(pi_row.iter()) {
                match predict(model, w, x) {
                    Prediction::Probs(p) => {
                        probs[0] += pi * p[0];
                        probs[1] += pi * p[1];
                    }
                    Prediction::Scalar(_) => unreachable!(),
                }
            }
            Prediction::Probs(probs)
        }
    }
}

/// One-shot label for an unseen agent: a single E-step application from the
/// uniform prior, using the agent's mean training losses under each model.
pub fn one_shot_label(models: &ClusterModels, data: &AgentDataset, model: ModelKind) -> Result<Vec<f64>> {
    assert!(data.num_samples() >= 1);
    let num_models = models.num_models();
    let mut losses = Array2::zeros((1, num_models));
    for m in 0..num_models {
        losses[(0, m)] = pointwise_loss(model, &models.weights[m], data)?;
    }
    let prior = SoftLabelMatrix::uniform(1, num_models);
    Ok(e_step(&prior, &losses).row(0).to_vec())
}

/// Per-agent argmax of the soft labels; ties break toward the lowest index.
pub fn hard_assignment(pi: &SoftLabelMatrix) -> Vec<usize> {
    (0..pi.num_agents())
        .map(|e| {
            let row = pi.row(e);
            let mut best = 0;
            for (m, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = m;
                }
            }
            best
        })
        .collect()
}

/// Appends one CSV row per `(round, agent, model)` soft label.
pub fn write_pi_csv<W: std::io::Write>(history: &FocusHistory, mut out: W) -> Result<()> {
    writeln!(out, "# schema=1")?;
    writeln!(out, "round,agent,m,pi")?;
    for (round, pi) in history.pi_snapshots.iter().enumerate() {
        for e in 0..pi.num_agents() {
            for (m, &p) in pi.row(e).iter().enumerate() {
                writeln!(out, "{round},{e},{m},{p}")?;
            }
        }
    }
    Ok(())
}

/// Final `(W, Pi)` checkpoint document.
#[derive(Debug, Serialize)]
pub struct FocusCheckpoint<'a> {
    pub weights: Vec<Vec<f64>>,
    pub pi: Vec<Vec<f64>>,
    pub config: &'a ScenarioConfig,
    pub seed: u64,
}

impl<'a> FocusCheckpoint<'a> {
    pub fn new(run: &FocusRun, config: &'a ScenarioConfig) -> Self {
        Self {
            weights: run.models.weights.iter().map(|w| w.0.to_vec()).collect(),
            pi: run.pi.to_rows(),
            config,
            seed: config.seed,
        }
    }
}

fn record_snapshot(history: &mut FocusHistory, pi: &SoftLabelMatrix, models: &ClusterModels, scenario: &Scenario) {
    let map = nearest_center_map(models, &scenario.cluster_spec);
    let min_correct = (0..pi.num_agents())
        .map(|e| {
            let truth = scenario.assignment[e];
            pi.row(e)
                .iter()
                .enumerate()
                .filter(|(m, _)| map[*m] == truth)
                .map(|(_, &p)| p)
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);
    let distances = models
        .weights
        .iter()
        .zip(&map)
        .map(|(w, &c)| {
            let center = &scenario.cluster_spec.centers[c];
            w.0.iter().zip(center.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
        })
        .collect();
    history.pi_snapshots.push(pi.clone());
    history.model_snapshots.push(models.clone());
    history.min_correct_pi.push(min_correct);
    history.model_center_distances.push(distances);
}

/// Maps every model to its nearest ground-truth center (evaluation-only).
fn nearest_center_map(models: &ClusterModels, spec: &ClusterSpec) -> Vec<usize> {
    models
        .weights
        .iter()
        .map(|w| {
            let mut best = 0;
            let mut best_dist = f64::INFINITY;
            for (c, center) in spec.centers.iter().enumerate() {
                let dist: f64 = w.0.iter().zip(center.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                if dist < best_dist {
                    best_dist = dist;
                    best = c;
                }
            }
            best
        })
        .collect()
}
