//! Agent-level fairness evaluation.
//!
//! Excess risk is an agent's population loss under its serving model minus
//! the Bayes optimal loss of its data distribution. The headline fairness
//! score (FAA) is the spread of excess risks across agents: lower is fairer.
//! Two excess-risk routes are provided and kept independent: the closed
//! form available for the Gaussian linear model, and a surrogate route that
//! estimates the Bayes term by centrally training on the agent's
//! ground-truth cluster.

use rayon::prelude::*;
use serde::Serialize;

use crate::data_synth::{AgentDataset, Scenario};
use crate::error::{Error, Result};
use crate::focus_em::SoftLabelMatrix;
use crate::models::{
    analytic_excess_risk_linear, ensemble_pointwise_loss, gradient, smoothness_upper_bound, ClusterModels,
    ModelKind, ParamVector, Prediction,
};

/// Default gradient-step budget for surrogate Bayes training.
pub const SURROGATE_BUDGET: usize = 50_000;

/// Gradient-norm tolerance at which surrogate training stops.
pub const SURROGATE_GRAD_TOL: f64 = 1e-8;

/// How per-agent excess risks are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcessMethod {
    /// Closed form `delta^2 ||w_eff - mu_e||^2` (linear model only).
    AnalyticLinear,
    /// Population loss estimated on held-out data minus a surrogate Bayes
    /// loss trained on the agent's true-cluster pool.
    Surrogate,
}

/// Per-agent excess risks. Values are reported raw; small negatives can
/// occur for the surrogate route and are clamped only inside the FAA
/// headline number.
#[derive(Debug, Clone, Serialize)]
pub struct ExcessRiskVector {
    pub per_agent: Vec<f64>,
    pub method: ExcessMethod,
}

impl ExcessRiskVector {
    pub fn clamped(&self) -> Vec<f64> {
        self.per_agent.iter().map(|&x| x.max(0.0)).collect()
    }
}

/// The model(s) serving each agent at evaluation time.
#[derive(Debug, Clone, Copy)]
pub enum Predictor<'a> {
    /// One shared model (FedAvg).
    Global(&'a ParamVector),
    /// Soft-label ensemble (FOCUS).
    Ensemble {
        models: &'a ClusterModels,
        pi: &'a SoftLabelMatrix,
    },
    /// Each agent served by its own cluster's model (hard clustering).
    HardCluster {
        models: &'a ClusterModels,
        assignment: &'a [usize],
    },
}

impl<'a> Predictor<'a> {
    fn weights_and_row(&self, agent: usize) -> (Vec<&'a ParamVector>, Vec<f64>) {
        match self {
            Predictor::Global(w) => (vec![w], vec![1.0]),
            Predictor::Ensemble { models, pi } => (models.weights.iter().collect(), pi.row(agent).to_vec()),
            Predictor::HardCluster { models, assignment } => {
                (vec![&models.weights[assignment[agent]]], vec![1.0])
            }
        }
    }

    /// The agent's effective linear model: the soft-label average of the
    /// cluster weights (averaging predictions equals predicting with the
    /// averaged weights for a linear model).
    pub fn effective_linear_weight(&self, agent: usize) -> ParamVector {
        let (weights, row) = self.weights_and_row(agent);
        let mut acc = ParamVector::zeros(weights[0].dim());
        for (w, pi) in weights.iter().zip(row.iter()) {
            acc.0.iter_mut().zip(w.0.iter()).for_each(|(a, &x)| *a += pi * x);
        }
        acc
    }

    /// Mean per-sample loss of the agent's served prediction on `data`.
    pub fn pointwise_loss(&self, agent: usize, data: &AgentDataset, model: ModelKind) -> Result<f64> {
        let (weights, row) = self.weights_and_row(agent);
        let owned: Vec<ParamVector> = weights.into_iter().cloned().collect();
        ensemble_pointwise_loss(model, &owned, &row, data)
    }

    fn accuracy(&self, agent: usize, data: &AgentDataset, model: ModelKind) -> Result<f64> {
        let (weights, row) = self.weights_and_row(agent);
        let owned = ClusterModels {
            weights: weights.into_iter().cloned().collect(),
        };
        let mut correct = 0usize;
        for (i, feature_row) in data.features.rows().into_iter().enumerate() {
            let x = feature_row.to_owned();
            match crate::focus_em::ensemble_predict(&owned, &row, &x, model) {
                Prediction::Probs(p) => {
                    let label = if p[1] >= p[0] { 1.0 } else { 0.0 };
                    if label == data.labels[i] {
                        correct += 1;
                    }
                }
                Prediction::Scalar(_) => {
                    return Err(Error::UnsupportedEvaluation("accuracy on a regression model".into()))
                }
            }
        }
        Ok(correct as f64 / data.num_samples() as f64)
    }
}

/// Surrogate Bayes losses: one centrally trained model per ground-truth
/// cluster (full-batch gradient descent on the pooled training data of that
/// cluster), evaluated on each agent's held-out data.
#[derive(Debug, Clone, Serialize)]
pub struct SurrogateBayes {
    pub per_agent: Vec<f64>,
    /// True when a cluster exhausted the budget before reaching the
    /// gradient tolerance; the best model found is still used.
    pub budget_exhausted: bool,
}

pub fn surrogate_bayes_loss(scenario: &Scenario, model: ModelKind, budget: usize) -> Result<SurrogateBayes> {
    let num_clusters = scenario.assignment.iter().max().map(|&m| m + 1).unwrap_or(0);
    let mut exhausted = false;
    let mut cluster_models: Vec<ParamVector> = Vec::with_capacity(num_clusters);
    for m in 0..num_clusters {
        let members: Vec<usize> = (0..scenario.num_agents()).filter(|&e| scenario.assignment[e] == m).collect();
        if members.is_empty() {
            return Err(Error::EmptyCluster(m));
        }
        let pooled = pool_datasets(&members.iter().map(|&e| &scenario.train[e]).collect::<Vec<_>>());
        let (w, hit_budget) = train_to_tolerance(&pooled, model, budget)?;
        exhausted |= hit_budget;
        cluster_models.push(w);
    }
    let per_agent = scenario
        .eval
        .iter()
        .enumerate()
        .map(|(e, data)| {
            let w = &cluster_models[scenario.assignment[e]];
            ensemble_pointwise_loss(model, std::slice::from_ref(w), &[1.0], data)
        })
        .collect::<Result<_>>()?;
    Ok(SurrogateBayes {
        per_agent,
        budget_exhausted: exhausted,
    })
}

fn pool_datasets(datasets: &[&AgentDataset]) -> AgentDataset {
    let d = datasets[0].dimension();
    let n: usize = datasets.iter().map(|x| x.num_samples()).sum();
    let mut features = ndarray::Array2::zeros((n, d));
    let mut labels = ndarray::Array1::zeros(n);
    let mut offset = 0;
    for data in datasets {
        for (i, (row, &y)) in data.features.rows().into_iter().zip(data.labels.iter()).enumerate() {
            features.row_mut(offset + i).assign(&row);
            labels[offset + i] = y;
        }
        offset += data.num_samples();
    }
    AgentDataset::from_parts(features, labels, datasets[0].true_mean.clone(), datasets[0].noise_std, datasets[0].feature_std, datasets[0].true_cluster)
}

/// Full-batch gradient descent with step `1 / L_hat` until the gradient norm
/// drops below [`SURROGATE_GRAD_TOL`] or the budget runs out. Returns the
/// final weights and whether the budget was exhausted.
fn train_to_tolerance(data: &AgentDataset, model: ModelKind, budget: usize) -> Result<(ParamVector, bool)> {
    let eta = 1.0 / smoothness_upper_bound(model, data);
    let mut w = ParamVector::zeros(data.dimension());
    for _ in 0..budget {
        let g = gradient(model, &w, data)?;
        let norm = g.norm();
        if norm <= SURROGATE_GRAD_TOL {
            return Ok((w, false));
        }
        for (wi, gi) in w.0.iter_mut().zip(g.0.iter()) {
            *wi -= eta * gi;
        }
        if !w.is_finite() {
            return Err(Error::DivergenceDetected { round: 0, agent: 0 });
        }
    }
    Ok((w, true))
}

/// Per-agent excess risks of `predictor` on the scenario.
pub fn excess_risks(
    predictor: Predictor<'_>,
    scenario: &Scenario,
    model: ModelKind,
    method: ExcessMethod,
    budget: usize,
) -> Result<ExcessRiskVector> {
    let per_agent = match method {
        ExcessMethod::AnalyticLinear => {
            if model != ModelKind::LinearRegression {
                return Err(Error::UnsupportedEvaluation(
                    "analytic excess risks require the linear model".into(),
                ));
            }
            (0..scenario.num_agents())
                .map(|e| {
                    let w = predictor.effective_linear_weight(e);
                    let data = &scenario.train[e];
                    analytic_excess_risk_linear(&w, &data.true_mean, data.feature_std)
                })
                .collect()
        }
        ExcessMethod::Surrogate => {
            let bayes = surrogate_bayes_loss(scenario, model, budget)?;
            let population: Vec<f64> = scenario
                .eval
                .par_iter()
                .enumerate()
                .map(|(e, data)| predictor.pointwise_loss(e, data, model))
                .collect::<Result<_>>()?;
            population.iter().zip(bayes.per_agent.iter()).map(|(p, b)| p - b).collect()
        }
    };
    Ok(ExcessRiskVector { per_agent, method })
}

/// FAA: the spread `max_e - min_e` of excess risks, with the attaining
/// `(argmax, argmin)` pair.
pub fn faa(excess: &[f64]) -> (f64, (usize, usize)) {
    assert!(!excess.is_empty());
    let mut hi = 0;
    let mut lo = 0;
    for (e, &x) in excess.iter().enumerate() {
        if x > excess[hi] {
            hi = e;
        }
        if x < excess[lo] {
            lo = e;
        }
    }
    (excess[hi] - excess[lo], (hi, lo))
}

/// Worst per-agent population loss.
pub fn agnostic_loss(per_agent_loss: &[f64]) -> f64 {
    assert!(!per_agent_loss.is_empty());
    per_agent_loss.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Population standard deviation of per-agent accuracies.
pub fn accuracy_parity_std(per_agent_accuracy: &[f64]) -> f64 {
    assert!(!per_agent_accuracy.is_empty());
    let n = per_agent_accuracy.len() as f64;
    let mean = per_agent_accuracy.iter().sum::<f64>() / n;
    (per_agent_accuracy.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n).sqrt()
}

/// Closed-form fairness bounds for the single-outlier linear scenario:
/// an upper bound on the clustered algorithm's FAA and a lower bound on
/// FedAvg's.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Theorem3Bounds {
    pub focus_upper: f64,
    pub fedavg_lower: f64,
}

pub fn theorem3_bounds(num_agents: usize, r: f64, big_r: f64, delta: f64) -> Result<Theorem3Bounds> {
    if num_agents <= 2 {
        return Err(Error::InvalidConfig {
            field: "num_agents",
            reason: "the outlier bounds need E > 2".into(),
        });
    }
    if big_r <= 2.0 * r {
        return Err(Error::InvalidConfig {
            field: "inter_distance",
            reason: "R > 2r required".into(),
        });
    }
    let e = num_agents as f64;
    let d2 = delta * delta;
    Ok(Theorem3Bounds {
        focus_upper: d2 * r * r,
        fedavg_lower: d2 * ((big_r * big_r * (e - 2.0) - 2.0 * big_r * r) / e + r * r),
    })
}

/// FAA of both algorithms evaluated in closed form at their expected
/// converged weights: FedAvg at the mean of all agent means, the clustered
/// algorithm at the per-cluster means (each agent served by its own
/// cluster's weight). Zero sampling is involved; only the generating means
/// enter.
#[derive(Debug, Clone, Serialize)]
pub struct ClosedFormFairness {
    pub faa_fedavg: f64,
    pub faa_focus: f64,
    pub fedavg_excess: Vec<f64>,
    pub focus_excess: Vec<f64>,
}

pub fn closed_form_fairness(scenario: &Scenario, model: ModelKind) -> Result<ClosedFormFairness> {
    if model != ModelKind::LinearRegression {
        return Err(Error::UnsupportedEvaluation(
            "closed-form fairness requires the linear model".into(),
        ));
    }
    let fedavg_weight = analytic_fedavg_weight(scenario);
    let cluster_means = analytic_cluster_means(scenario);
    let fedavg_excess: Vec<f64> = scenario
        .train
        .iter()
        .map(|d| analytic_excess_risk_linear(&fedavg_weight, &d.true_mean, d.feature_std))
        .collect();
    let focus_excess: Vec<f64> = scenario
        .train
        .iter()
        .enumerate()
        .map(|(e, d)| analytic_excess_risk_linear(&cluster_means[scenario.assignment[e]], &d.true_mean, d.feature_std))
        .collect();
    Ok(ClosedFormFairness {
        faa_fedavg: faa(&fedavg_excess).0,
        faa_focus: faa(&focus_excess).0,
        fedavg_excess,
        focus_excess,
    })
}

/// Sample-size-weighted mean of the agents' generating means: the expected
/// FedAvg fixed point.
pub fn analytic_fedavg_weight(scenario: &Scenario) -> ParamVector {
    let d = scenario.train[0].dimension();
    let n: f64 = scenario.train.iter().map(|data| data.num_samples() as f64).sum();
    let mut acc = ParamVector::zeros(d);
    for data in &scenario.train {
        let share = data.num_samples() as f64 / n;
        acc.0.iter_mut().zip(data.true_mean.iter()).for_each(|(a, &x)| *a += share * x);
    }
    acc
}

/// Per-cluster plain averages of the generating means: the expected
/// converged cluster weights under correct clustering.
pub fn analytic_cluster_means(scenario: &Scenario) -> Vec<ParamVector> {
    let d = scenario.train[0].dimension();
    let num_clusters = scenario.assignment.iter().max().map(|&m| m + 1).unwrap_or(0);
    (0..num_clusters)
        .map(|m| {
            let members: Vec<usize> = (0..scenario.num_agents()).filter(|&e| scenario.assignment[e] == m).collect();
            let mut acc = ParamVector::zeros(d);
            for &e in &members {
                acc.0
                    .iter_mut()
                    .zip(scenario.train[e].true_mean.iter())
                    .for_each(|(a, &x)| *a += x / members.len() as f64);
            }
            acc
        })
        .collect()
}

/// Full fairness report for one predictor on one scenario.
#[derive(Debug, Clone, Serialize)]
pub struct FairnessReport {
    /// Spread of (clamped) excess risks.
    pub faa: f64,
    /// Spread of the raw excess risks, before clamping negatives to zero.
    pub faa_raw: f64,
    pub agnostic_loss: f64,
    /// Accuracy-parity standard deviation; only defined for classification.
    pub accuracy_parity_std: Option<f64>,
    /// `(argmax, argmin)` agents attaining the FAA spread.
    pub argmax_pair: (usize, usize),
    /// Per-agent held-out loss of the serving model.
    pub per_agent_loss: Vec<f64>,
    pub per_agent_excess: ExcessRiskVector,
}

pub fn fairness_report(
    predictor: Predictor<'_>,
    scenario: &Scenario,
    model: ModelKind,
    method: ExcessMethod,
    budget: usize,
) -> Result<FairnessReport> {
    let excess = excess_risks(predictor, scenario, model, method, budget)?;
    let per_agent_loss: Vec<f64> = scenario
        .eval
        .par_iter()
        .enumerate()
        .map(|(e, data)| predictor.pointwise_loss(e, data, model))
        .collect::<Result<_>>()?;
    let (faa_value, pair) = faa(&excess.clamped());
    let (faa_raw, _) = faa(&excess.per_agent);
    let accuracy_parity = if model.is_classification() {
        let accuracies: Vec<f64> = scenario
            .eval
            .iter()
            .enumerate()
            .map(|(e, data)| predictor.accuracy(e, data, model))
            .collect::<Result<_>>()?;
        Some(accuracy_parity_std(&accuracies))
    } else {
        None
    };
    Ok(FairnessReport {
        faa: faa_value,
        faa_raw,
        agnostic_loss: agnostic_loss(&per_agent_loss),
        accuracy_parity_std: accuracy_parity,
        argmax_pair: pair,
        per_agent_loss,
        per_agent_excess: excess,
    })
}
