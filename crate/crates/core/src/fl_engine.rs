//! Round-based federated protocol simulator.
//!
//! One communication round broadcasts the current model(s), runs `K`
//! deterministic full-batch gradient steps on every agent in parallel, and
//! aggregates with a weighted average. Aggregation always normalizes the
//! weights first and reduces in agent order, so a run is bit-reproducible
//! and FedAvg coincides exactly with the soft-label path when every weight
//! is equal.

use ndarray::Array1;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::data_synth::{AgentDataset, Scenario};
use crate::error::{Error, Result};
use crate::models::{
    empirical_loss, ensemble_pointwise_loss, gradient, smoothness_upper_bound, ClusterModels, ModelKind, ParamVector,
};
use crate::rng::{Purpose, Streams};

/// How initial model weights are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Each model starts from a randomly chosen distinct agent's K-step
    /// local fit; picks after the first are distance-squared weighted so
    /// the chosen fits spread across the data's modes.
    LocalFit,
    /// Each model starts at its ground-truth cluster center plus a
    /// perturbation of norm `delta0`. Evaluation-only: used by the
    /// theorem-check runs, which assume initialization near the optimum.
    OraclePerturbed,
}

/// Perturbation norm for [`InitStrategy::OraclePerturbed`]; small enough to
/// satisfy the near-center initialization the convergence analysis assumes
/// for the default geometry (R = 1, r = 0.01).
pub const ORACLE_INIT_DELTA: f64 = 0.1;

/// Per-round record of a federated run.
#[derive(Debug, Clone, Serialize)]
pub struct RoundLog {
    pub round: usize,
    /// Training loss of each agent's effective (ensemble) model.
    pub per_agent_train_loss: Vec<f64>,
    /// Held-out loss of each agent's effective model.
    pub per_agent_test_loss: Vec<f64>,
    /// L2 norm of each cluster model after the round.
    pub model_snapshot_norms: Vec<f64>,
    /// Wall-clock duration of the round in seconds. Not part of the
    /// deterministic CSV contract.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

/// Writes round logs as CSV rows `round,agent,train_loss,test_loss`.
pub fn write_round_log_csv<W: std::io::Write>(logs: &[RoundLog], mut out: W) -> Result<()> {
    writeln!(out, "# schema=1")?;
    writeln!(out, "round,agent,train_loss,test_loss")?;
    for log in logs {
        for (agent, (train, test)) in log.per_agent_train_loss.iter().zip(&log.per_agent_test_loss).enumerate() {
            writeln!(out, "{},{},{},{}", log.round, agent, train, test)?;
        }
    }
    Ok(())
}

/// Runs `K` full-batch gradient steps from `w0` on one agent's data.
pub fn local_sgd(w0: &ParamVector, data: &AgentDataset, eta: f64, steps: usize, model: ModelKind) -> Result<ParamVector> {
    assert!(steps >= 1, "K >= 1 required");
    assert!(eta >= 0.0, "eta must be non-negative");
    let mut w = w0.clone();
    for _ in 0..steps {
        let g = gradient(model, &w, data)?;
        for (wi, gi) in w.0.iter_mut().zip(g.0.iter()) {
            *wi -= eta * gi;
        }
        if !w.is_finite() {
            return Err(Error::DivergenceDetected { round: 0, agent: 0 });
        }
    }
    Ok(w)
}

/// Normalized weighted average of per-agent parameters, reduced in agent
/// order. Weights are divided by their total before accumulation so that
/// e.g. equal sample counts and equal soft labels produce the identical
/// floating-point result.
pub(crate) fn weighted_average(params: &[ParamVector], weights: &[f64]) -> ParamVector {
    debug_assert_eq!(params.len(), weights.len());
    let total: f64 = weights.iter().sum();
    let mut acc = Array1::<f64>::zeros(params[0].dim());
    for (p, &w) in params.iter().zip(weights.iter()) {
        let share = w / total;
        acc.iter_mut().zip(p.0.iter()).for_each(|(a, &x)| *a += share * x);
    }
    ParamVector(acc)
}

/// Snapshot of a FedAvg federation between rounds.
#[derive(Debug, Clone)]
pub struct FederationState {
    pub round: usize,
    pub global: ParamVector,
}

/// One FedAvg round: every agent runs local SGD from the global model and
/// the server averages with weights `n_e / n`.
pub fn fedavg_round(
    state: &FederationState,
    datasets: &[AgentDataset],
    eta: f64,
    steps: usize,
    model: ModelKind,
) -> Result<FederationState> {
    let locals: Vec<Result<ParamVector>> = datasets
        .par_iter()
        .map(|data| local_sgd(&state.global, data, eta, steps, model))
        .collect();
    let mut params = Vec::with_capacity(locals.len());
    for (agent, result) in locals.into_iter().enumerate() {
        params.push(result.map_err(|_| Error::DivergenceDetected { round: state.round, agent })?);
    }
    let weights: Vec<f64> = datasets.iter().map(|d| d.num_samples() as f64).collect();
    Ok(FederationState {
        round: state.round + 1,
        global: weighted_average(&params, &weights),
    })
}

/// Outcome of a full FedAvg run.
#[derive(Debug, Clone)]
pub struct FedAvgRun {
    pub model: ParamVector,
    pub logs: Vec<RoundLog>,
    /// Global model after every round (for checkpointing).
    pub snapshots: Vec<ParamVector>,
}

/// Runs `T` FedAvg rounds over the scenario's training data, logging
/// train/test losses each round.
pub fn run_fedavg(scenario: &Scenario, cfg: &ScenarioConfig) -> Result<FedAvgRun> {
    let model = cfg.model();
    let init = init_models(
        InitStrategy::LocalFit,
        1,
        scenario,
        cfg,
        0, // stream index shared with the single-cluster paths
    )?;
    run_fedavg_from(init.weights.into_iter().next().unwrap(), scenario, cfg, model)
}

fn run_fedavg_from(init: ParamVector, scenario: &Scenario, cfg: &ScenarioConfig, model: ModelKind) -> Result<FedAvgRun> {
    let mut state = FederationState { round: 0, global: init };
    let mut logs = Vec::with_capacity(cfg.rounds);
    let mut snapshots = Vec::with_capacity(cfg.rounds);
    let descent_guard = descent_guard_threshold(scenario, cfg, model);
    let mut prev_objective = f64::INFINITY;
    for _ in 0..cfg.rounds {
        let start = std::time::Instant::now();
        state = fedavg_round(&state, &scenario.train, cfg.learning_rate, cfg.local_steps, model)?;
        // Logged losses go through the ensemble path (a one-model ensemble
        // here), the same code the soft-label engine logs with.
        let single = std::slice::from_ref(&state.global);
        let train: Vec<f64> = scenario
            .train
            .iter()
            .map(|d| ensemble_pointwise_loss(model, single, &[1.0], d))
            .collect::<Result<_>>()?;
        let test: Vec<f64> = scenario
            .eval
            .iter()
            .map(|d| ensemble_pointwise_loss(model, single, &[1.0], d))
            .collect::<Result<_>>()?;
        if let Some(slack) = descent_guard {
            let objective = weighted_mean_by_samples(&per_agent_losses(&state.global, &scenario.train, model)?, &scenario.train);
            debug_assert!(
                objective <= prev_objective + slack,
                "global training objective increased at round {}: {} -> {}",
                state.round,
                prev_objective,
                objective
            );
            prev_objective = objective;
        }
        logs.push(RoundLog {
            round: state.round,
            per_agent_train_loss: train,
            per_agent_test_loss: test,
            model_snapshot_norms: vec![state.global.norm()],
            wall_time_secs: start.elapsed().as_secs_f64(),
        });
        snapshots.push(state.global.clone());
    }
    Ok(FedAvgRun {
        model: state.global,
        logs,
        snapshots,
    })
}

/// Convex-descent check is active only when the learning rate is inside the
/// safe region `eta <= 1 / (2 L_hat)`.
fn descent_guard_threshold(scenario: &Scenario, cfg: &ScenarioConfig, model: ModelKind) -> Option<f64> {
    let l_hat = scenario
        .train
        .iter()
        .map(|d| smoothness_upper_bound(model, d))
        .fold(0.0f64, f64::max);
    (cfg.learning_rate <= 0.5 / l_hat).then_some(1e-9)
}

fn per_agent_losses(w: &ParamVector, datasets: &[AgentDataset], model: ModelKind) -> Result<Vec<f64>> {
    datasets.iter().map(|d| empirical_loss(model, w, d)).collect()
}

fn weighted_mean_by_samples(losses: &[f64], datasets: &[AgentDataset]) -> f64 {
    let n: f64 = datasets.iter().map(|d| d.num_samples() as f64).sum();
    losses
        .iter()
        .zip(datasets)
        .map(|(loss, d)| loss * d.num_samples() as f64 / n)
        .sum()
}

/// Outcome of a hard-cluster FedAvg run: one independent FedAvg model per
/// cluster; each agent is served by its own cluster's model.
#[derive(Debug, Clone)]
pub struct HardClusterRun {
    pub models: ClusterModels,
    pub logs: Vec<RoundLog>,
    /// All cluster models after every round (for checkpointing).
    pub snapshots: Vec<ClusterModels>,
}

/// Independent FedAvg per cluster over a fixed hard assignment.
pub fn run_fedavg_hardcluster(scenario: &Scenario, assignment: &[usize], cfg: &ScenarioConfig) -> Result<HardClusterRun> {
    assert_eq!(assignment.len(), scenario.num_agents());
    let num_clusters = assignment.iter().max().map(|&m| m + 1).unwrap_or(0);
    let model = cfg.model();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_clusters];
    for (agent, &m) in assignment.iter().enumerate() {
        members[m].push(agent);
    }
    if let Some(m) = members.iter().position(Vec::is_empty) {
        return Err(Error::EmptyCluster(m));
    }

    let mut weights = Vec::with_capacity(num_clusters);
    let mut cluster_logs = Vec::with_capacity(num_clusters);
    let mut cluster_snapshots = Vec::with_capacity(num_clusters);
    for (m, member) in members.iter().enumerate() {
        let sub = Scenario {
            train: member.iter().map(|&e| scenario.train[e].clone()).collect(),
            eval: member.iter().map(|&e| scenario.eval[e].clone()).collect(),
            cluster_spec: scenario.cluster_spec.clone(),
            assignment: member.iter().map(|&e| scenario.assignment[e]).collect(),
        };
        let init = local_fit_init(&sub, cfg, 1, m as u64)?;
        let run = run_fedavg_from(init.weights.into_iter().next().unwrap(), &sub, cfg, model)?;
        weights.push(run.model);
        cluster_logs.push(run.logs);
        cluster_snapshots.push(run.snapshots);
    }

    // Stitch per-cluster logs back into whole-federation rounds.
    let mut logs = Vec::with_capacity(cfg.rounds);
    #[allow(clippy::needless_range_loop)]
    for round in 0..cfg.rounds {
        let mut train = vec![0.0; scenario.num_agents()];
        let mut test = vec![0.0; scenario.num_agents()];
        let mut norms = vec![0.0; num_clusters];
        let mut wall = 0.0;
        for (m, member) in members.iter().enumerate() {
            let log = &cluster_logs[m][round];
            for (slot, &agent) in member.iter().enumerate() {
                train[agent] = log.per_agent_train_loss[slot];
                test[agent] = log.per_agent_test_loss[slot];
            }
            norms[m] = log.model_snapshot_norms[0];
            wall += log.wall_time_secs;
        }
        logs.push(RoundLog {
            round: round + 1,
            per_agent_train_loss: train,
            per_agent_test_loss: test,
            model_snapshot_norms: norms,
            wall_time_secs: wall,
        });
    }
    let snapshots = (0..cfg.rounds)
        .map(|round| ClusterModels {
            weights: cluster_snapshots.iter().map(|s| s[round].clone()).collect(),
        })
        .collect();
    Ok(HardClusterRun {
        models: ClusterModels { weights },
        logs,
        snapshots,
    })
}

/// Initial models for a run with `num_models` clusters.
pub fn init_models(
    strategy: InitStrategy,
    num_models: usize,
    scenario: &Scenario,
    cfg: &ScenarioConfig,
    stream_index: u64,
) -> Result<ClusterModels> {
    match strategy {
        InitStrategy::LocalFit => local_fit_init(scenario, cfg, num_models, stream_index),
        InitStrategy::OraclePerturbed => oracle_perturbed_init(scenario, cfg, num_models, stream_index),
    }
}

/// K-step local fits from zero for every agent, then `num_models` distinct
/// agents chosen by distance-squared weighted sampling (first uniformly).
fn local_fit_init(scenario: &Scenario, cfg: &ScenarioConfig, num_models: usize, stream_index: u64) -> Result<ClusterModels> {
    assert!(num_models >= 1 && num_models <= scenario.num_agents());
    let model = cfg.model();
    let zero = ParamVector::zeros(cfg.dimension);
    let fits: Vec<Result<ParamVector>> = scenario
        .train
        .par_iter()
        .map(|data| local_sgd(&zero, data, cfg.learning_rate, cfg.local_steps, model))
        .collect();
    let fits: Vec<ParamVector> = fits.into_iter().collect::<Result<_>>()?;

    let mut rng = Streams::new(cfg.seed).stream(Purpose::Init, stream_index);
    let mut chosen: Vec<usize> = vec![rng.gen_range(0..fits.len())];
    while chosen.len() < num_models {
        let dist_sq: Vec<f64> = (0..fits.len())
            .map(|e| {
                chosen
                    .iter()
                    .map(|&c| {
                        fits[e]
                            .0
                            .iter()
                            .zip(fits[c].0.iter())
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = dist_sq.iter().sum();
        let pick = if total > 0.0 {
            let mut ticket = rng.gen::<f64>() * total;
            let mut pick = fits.len() - 1;
            for (e, &w) in dist_sq.iter().enumerate() {
                if ticket < w {
                    pick = e;
                    break;
                }
                ticket -= w;
            }
            pick
        } else {
            // All fits identical: fall back to the first unchosen agent.
            (0..fits.len()).find(|e| !chosen.contains(e)).unwrap()
        };
        if !chosen.contains(&pick) {
            chosen.push(pick);
        }
    }
    Ok(ClusterModels {
        weights: chosen.into_iter().map(|e| fits[e].clone()).collect(),
    })
}

/// Ground-truth centers plus perturbations of norm [`ORACLE_INIT_DELTA`].
/// Requires `num_models` equal to the scenario's true cluster count.
fn oracle_perturbed_init(scenario: &Scenario, cfg: &ScenarioConfig, num_models: usize, stream_index: u64) -> Result<ClusterModels> {
    if num_models != scenario.cluster_spec.num_clusters() {
        return Err(Error::InvalidConfig {
            field: "num_clusters",
            reason: format!(
                "oracle-perturbed init needs one model per true cluster ({} != {})",
                num_models,
                scenario.cluster_spec.num_clusters()
            ),
        });
    }
    let mut rng = Streams::new(cfg.seed).stream(Purpose::Init, stream_index);
    let weights = scenario
        .cluster_spec
        .centers
        .iter()
        .map(|center| {
            let noise = Array1::from_vec(crate::rng::uniform_on_sphere(&mut rng, center.len(), ORACLE_INIT_DELTA));
            ParamVector(center + &noise)
        })
        .collect();
    Ok(ClusterModels { weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_synth::{gen_regression_dataset, generate_scenario};
    use crate::rng::{Purpose, Streams};
    use approx::assert_relative_eq;
    use ndarray::{array, Array2};

    fn one_sample_dataset() -> AgentDataset {
        AgentDataset::from_parts(
            Array2::from_shape_vec((1, 1), vec![1.0]).unwrap(),
            array![1.0],
            array![1.0],
            0.0,
            1.0,
            0,
        )
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let data = one_sample_dataset();
        let w0 = ParamVector::from_vec(vec![0.25]);
        let w = local_sgd(&w0, &data, 0.0, 5, ModelKind::LinearRegression).unwrap();
        assert_eq!(w, w0);
    }

    #[test]
    fn hand_computed_single_step() {
        // loss (w - 1)^2, gradient 2(w - 1); from w=0 with eta=0.25: w1 = 0.5.
        let data = one_sample_dataset();
        let w = local_sgd(&ParamVector::zeros(1), &data, 0.25, 1, ModelKind::LinearRegression).unwrap();
        assert_relative_eq!(w.0[0], 0.5);
    }

    #[test]
    fn long_descent_reaches_ols_solution() {
        let mu = array![0.7, -0.4, 0.1];
        let mut rng = Streams::new(41).stream(Purpose::TrainData, 0);
        let data = gen_regression_dataset(&mu, 200, 1.0, 0.0, &mut rng);
        let ols = crate::check::ols_solve(&data.features, &data.labels);
        let w = local_sgd(&ParamVector::zeros(3), &data, 0.05, 2000, ModelKind::LinearRegression).unwrap();
        let err: f64 = w.0.iter().zip(ols.0.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        assert!(err <= 1e-6, "distance to OLS {err}");
    }

    #[test]
    fn divergence_is_detected() {
        let data = one_sample_dataset();
        let err = local_sgd(&ParamVector::from_vec(vec![1e300]), &data, 1e300, 3, ModelKind::LinearRegression);
        assert!(matches!(err, Err(Error::DivergenceDetected { .. })));
    }

    #[test]
    fn round_with_identical_agents_equals_centralized_step() {
        let data = one_sample_dataset();
        let datasets = vec![data.clone(), data.clone(), data.clone()];
        let state = FederationState { round: 0, global: ParamVector::zeros(1) };
        let next = fedavg_round(&state, &datasets, 0.25, 1, ModelKind::LinearRegression).unwrap();
        let central = local_sgd(&ParamVector::zeros(1), &data, 0.25, 1, ModelKind::LinearRegression).unwrap();
        assert_relative_eq!(next.global.0[0], central.0[0]);
    }

    #[test]
    fn two_agent_round_is_average_of_hand_steps() {
        // Agent A: sample (x=1, y=1); agent B: sample (x=1, y=-1). Equal n_e.
        let a = one_sample_dataset();
        let b = AgentDataset::from_parts(
            Array2::from_shape_vec((1, 1), vec![1.0]).unwrap(),
            array![-1.0],
            array![-1.0],
            0.0,
            1.0,
            0,
        );
        let state = FederationState { round: 0, global: ParamVector::zeros(1) };
        let next = fedavg_round(&state, &[a, b], 0.25, 1, ModelKind::LinearRegression).unwrap();
        // Hand: agent A step -> 0.5, agent B step -> -0.5, average 0.
        assert_relative_eq!(next.global.0[0], 0.0);
    }

    #[test]
    fn aggregation_weight_is_sample_share() {
        // n_1 = 9, n_2 = 1: aggregate sits at 0.9 a + 0.1 b.
        let big = AgentDataset::from_parts(
            Array2::from_shape_vec((9, 1), vec![1.0; 9]).unwrap(),
            Array1::from_vec(vec![1.0; 9]),
            array![1.0],
            0.0,
            1.0,
            0,
        );
        let small = AgentDataset::from_parts(
            Array2::from_shape_vec((1, 1), vec![1.0]).unwrap(),
            array![-1.0],
            array![-1.0],
            0.0,
            1.0,
            0,
        );
        let state = FederationState { round: 0, global: ParamVector::zeros(1) };
        let next = fedavg_round(&state, &[big, small], 0.25, 1, ModelKind::LinearRegression).unwrap();
        assert_relative_eq!(next.global.0[0], 0.9 * 0.5 + 0.1 * (-0.5));
    }

    #[test]
    fn single_agent_federation_is_centralized_training() {
        // One agent, T rounds of K local steps: aggregation is the identity,
        // so the trajectory equals K*T consecutive centralized steps.
        let cfg = ScenarioConfig {
            rounds: 7,
            samples_per_agent: 40,
            dimension: 3,
            ..ScenarioConfig::default()
        };
        let full = generate_scenario(&cfg).unwrap();
        let solo = Scenario {
            train: vec![full.train[0].clone()],
            eval: vec![full.eval[0].clone()],
            cluster_spec: full.cluster_spec.clone(),
            assignment: vec![0],
        };
        let run = run_fedavg(&solo, &cfg).unwrap();
        let init = init_models(InitStrategy::LocalFit, 1, &solo, &cfg, 0).unwrap();
        let central = local_sgd(
            &init.weights[0],
            &solo.train[0],
            cfg.learning_rate,
            cfg.local_steps * cfg.rounds,
            cfg.model(),
        )
        .unwrap();
        assert_eq!(run.model, central);
    }

    #[test]
    fn fedavg_converges_to_mean_of_agent_means() {
        let cfg = ScenarioConfig::default();
        let scenario = generate_scenario(&cfg).unwrap();
        let run = run_fedavg(&scenario, &cfg).unwrap();
        let mut mean = Array1::<f64>::zeros(cfg.dimension);
        for d in &scenario.train {
            mean += &d.true_mean;
        }
        mean /= cfg.num_agents as f64;
        let dist: f64 = run.model.0.iter().zip(mean.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        assert!(dist <= 0.05, "distance to mean of means {dist}");
        assert_eq!(run.logs.len(), cfg.rounds);
    }

    #[test]
    fn training_loss_never_increases_with_safe_learning_rate() {
        let cfg = ScenarioConfig::default();
        let scenario = generate_scenario(&cfg).unwrap();
        let run = run_fedavg(&scenario, &cfg).unwrap();
        let global: Vec<f64> = run
            .logs
            .iter()
            .map(|log| weighted_mean_by_samples(&log.per_agent_train_loss, &scenario.train))
            .collect();
        for pair in global.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9, "loss increased: {} -> {}", pair[0], pair[1]);
        }
    }

    #[test]
    fn hardcluster_single_cluster_matches_fedavg_bitwise() {
        let cfg = ScenarioConfig::default();
        let scenario = generate_scenario(&cfg).unwrap();
        let fedavg = run_fedavg(&scenario, &cfg).unwrap();
        let hard = run_fedavg_hardcluster(&scenario, &vec![0; cfg.num_agents], &cfg).unwrap();
        assert_eq!(hard.models.weights[0], fedavg.model);
        for (a, b) in hard.logs.iter().zip(fedavg.logs.iter()) {
            assert_eq!(a.per_agent_train_loss, b.per_agent_train_loss);
            assert_eq!(a.per_agent_test_loss, b.per_agent_test_loss);
        }
    }

    #[test]
    fn hardcluster_with_true_assignment_recovers_cluster_means() {
        let cfg = ScenarioConfig::default();
        let scenario = generate_scenario(&cfg).unwrap();
        let run = run_fedavg_hardcluster(&scenario, &scenario.assignment.clone(), &cfg).unwrap();
        // Normal cluster model near the mean of the first nine means (== center).
        let dist0: f64 = run.models.weights[0]
            .0
            .iter()
            .zip(scenario.cluster_spec.centers[0].iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let dist1: f64 = run.models.weights[1]
            .0
            .iter()
            .zip(scenario.train[9].true_mean.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(dist0 <= 0.05, "normal cluster {dist0}");
        assert!(dist1 <= 0.05, "outlier cluster {dist1}");
    }

    #[test]
    fn hardcluster_rejects_empty_cluster() {
        let cfg = ScenarioConfig::default();
        let scenario = generate_scenario(&cfg).unwrap();
        let mut assignment = vec![0usize; cfg.num_agents];
        assignment[0] = 2; // cluster 1 has no members
        assert!(matches!(
            run_fedavg_hardcluster(&scenario, &assignment, &cfg),
            Err(Error::EmptyCluster(1))
        ));
    }

    #[test]
    fn oracle_init_sits_near_centers() {
        let cfg = ScenarioConfig::default();
        let scenario = generate_scenario(&cfg).unwrap();
        let init = init_models(InitStrategy::OraclePerturbed, 2, &scenario, &cfg, 0).unwrap();
        for (w, c) in init.weights.iter().zip(&scenario.cluster_spec.centers) {
            let dist: f64 = w.0.iter().zip(c.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            assert_relative_eq!(dist, ORACLE_INIT_DELTA, epsilon = 1e-9);
        }
    }

    #[test]
    fn local_fit_init_spreads_across_modes() {
        let cfg = ScenarioConfig::default();
        let scenario = generate_scenario(&cfg).unwrap();
        let init = init_models(InitStrategy::LocalFit, 2, &scenario, &cfg, 0).unwrap();
        // One pick per mode: the two chosen fits are far apart.
        let dist: f64 = init.weights[0]
            .0
            .iter()
            .zip(init.weights[1].0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(dist > 0.3, "init models too close: {dist}");
    }
}
