//! Synthetic heterogeneous federated datasets.
//!
//! Agents draw Gaussian features `x ~ N(0, delta^2 I_d)` and labels from a
//! linear (or logistic) model whose parameter lies within `intra_radius` of
//! its cluster center; centers are pairwise at least `inter_distance` apart,
//! so every generated scenario is separable by construction. Generation is a
//! pure function of `(config, seed)`: each agent reads its own random
//! stream, so per-agent work can run in parallel without changing output.

use std::io::Write;

use ndarray::{Array1, Array2};
use rand::Rng;
use rayon::prelude::*;

use crate::config::{ScenarioConfig, ScenarioKind};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose, Streams};

/// Maximum rejection-sampling attempts for center placement.
const CENTER_ATTEMPTS: usize = 10_000;

/// Relative margin kept below `intra_radius` when perturbations are rescaled,
/// so the ball constraint holds strictly under floating-point rounding.
const RADIUS_MARGIN: f64 = 1.0 - 1e-12;

/// Ground-truth cluster geometry of a generated scenario.
#[derive(Debug, Clone)]
pub struct ClusterSpec {
    /// Cluster centers `w*_m`.
    pub centers: Vec<Array1<f64>>,
    /// Radius `r` of the ball around each center containing its agents' means.
    pub intra_radius: f64,
    /// Minimum pairwise center distance `R`.
    pub inter_distance: f64,
}

impl ClusterSpec {
    pub fn num_clusters(&self) -> usize {
        self.centers.len()
    }

    /// Smallest pairwise center distance; `inf` for a single cluster.
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut min = f64::INFINITY;
        for i in 0..self.centers.len() {
            for j in (i + 1)..self.centers.len() {
                min = min.min(euclidean(&self.centers[i], &self.centers[j]));
            }
        }
        min
    }

    fn check(&self) -> Result<()> {
        if self.intra_radius >= self.inter_distance / 2.0 {
            return Err(Error::InvalidConfig {
                field: "intra_radius",
                reason: "r < R/2 required".into(),
            });
        }
        if self.min_pairwise_distance() < self.inter_distance {
            return Err(Error::InvalidConfig {
                field: "inter_distance",
                reason: "centers closer than R".into(),
            });
        }
        Ok(())
    }
}

fn euclidean(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// One agent's local data plus the generating parameters used for
/// closed-form evaluation. `true_mean` / `true_cluster` are evaluation-only
/// metadata: training code never reads them.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentDataset {
    /// `n_e x d` feature matrix.
    pub features: Array2<f64>,
    /// Regression targets, or 0/1 class labels for classification.
    pub labels: Array1<f64>,
    /// Generating parameter `mu_e`.
    pub true_mean: Array1<f64>,
    /// Label noise standard deviation `sigma_e`.
    pub noise_std: f64,
    /// Feature standard deviation `delta`.
    pub feature_std: f64,
    /// Ground-truth cluster id (evaluation-only).
    pub true_cluster: usize,
}

impl AgentDataset {
    pub fn from_parts(
        features: Array2<f64>,
        labels: Array1<f64>,
        true_mean: Array1<f64>,
        noise_std: f64,
        feature_std: f64,
        true_cluster: usize,
    ) -> Self {
        assert_eq!(features.nrows(), labels.len());
        assert_eq!(features.ncols(), true_mean.len());
        Self {
            features,
            labels,
            true_mean,
            noise_std,
            feature_std,
            true_cluster,
        }
    }

    pub fn num_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn dimension(&self) -> usize {
        self.features.ncols()
    }

    /// Writes the dataset as CSV: `d` feature columns and one label column.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# schema=1")?;
        let header: Vec<String> = (0..self.dimension()).map(|j| format!("x{j}")).collect();
        writeln!(out, "{},y", header.join(","))?;
        for (row, y) in self.features.rows().into_iter().zip(self.labels.iter()) {
            for x in row.iter() {
                write!(out, "{x},")?;
            }
            writeln!(out, "{y}")?;
        }
        Ok(())
    }
}

/// A fully generated experiment: training data, a same-size held-out
/// evaluation set per agent, and the ground-truth geometry.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub train: Vec<AgentDataset>,
    pub eval: Vec<AgentDataset>,
    pub cluster_spec: ClusterSpec,
    /// Ground-truth cluster id per agent (evaluation-only).
    pub assignment: Vec<usize>,
}

impl Scenario {
    pub fn num_agents(&self) -> usize {
        self.train.len()
    }
}

/// Places `num_clusters` centers with pairwise distance at least
/// `inter_distance` by rejection sampling of Gaussian directions scaled to
/// the sphere of radius `inter_distance`.
pub fn gen_cluster_centers<R: Rng>(
    num_clusters: usize,
    dimension: usize,
    inter_distance: f64,
    rng: &mut R,
) -> Result<ClusterSpec> {
    assert!(num_clusters >= 1 && dimension >= 1 && inter_distance > 0.0);
    let mut centers: Vec<Array1<f64>> = Vec::with_capacity(num_clusters);
    let mut attempts = 0;
    while centers.len() < num_clusters {
        if attempts >= CENTER_ATTEMPTS {
            return Err(Error::CenterPlacementFailed {
                num_clusters,
                dimension,
                attempts,
            });
        }
        attempts += 1;
        let candidate = Array1::from_vec(rng::uniform_on_sphere(rng, dimension, inter_distance));
        if centers.iter().all(|c| euclidean(c, &candidate) >= inter_distance) {
            centers.push(candidate);
        }
    }
    Ok(ClusterSpec {
        centers,
        intra_radius: 0.0,
        inter_distance,
    })
}

/// Draws one mean per agent: its cluster center plus a uniform draw from the
/// `intra_radius` ball.
pub fn gen_agent_means(spec: &ClusterSpec, assignment: &[usize], streams: &Streams) -> Vec<Array1<f64>> {
    assignment
        .iter()
        .enumerate()
        .map(|(e, &m)| {
            assert!(m < spec.num_clusters(), "assignment index out of range");
            let mut rng = streams.stream(Purpose::AgentMean, e as u64);
            let u = rng::uniform_in_ball(&mut rng, spec.centers[m].len(), spec.intra_radius);
            &spec.centers[m] + &Array1::from_vec(u)
        })
        .collect()
}

/// Gaussian-feature regression dataset: `y = mean^T x + eps` with
/// `x ~ N(0, delta^2 I)` and `eps ~ N(0, sigma^2)`.
pub fn gen_regression_dataset<R: Rng>(mean: &Array1<f64>, n: usize, delta: f64, sigma: f64, rng: &mut R) -> AgentDataset {
    assert!(n >= 1 && delta > 0.0 && sigma >= 0.0);
    let d = mean.len();
    let features = gen_features(n, d, delta, rng);
    let mut noise = vec![0.0; n];
    rng::fill_standard_normal(rng, &mut noise);
    let labels = Array1::from_iter(
        features
            .rows()
            .into_iter()
            .zip(noise)
            .map(|(row, eps)| row.iter().zip(mean.iter()).map(|(x, m)| x * m).sum::<f64>() + sigma * eps),
    );
    AgentDataset::from_parts(features, labels, mean.clone(), sigma, delta, 0)
}

/// Gaussian-feature binary classification dataset: labels are Bernoulli with
/// logit `mean^T x`.
pub fn gen_classification_dataset<R: Rng>(mean: &Array1<f64>, n: usize, delta: f64, rng: &mut R) -> AgentDataset {
    assert!(n >= 1 && delta > 0.0);
    let d = mean.len();
    let features = gen_features(n, d, delta, rng);
    let labels = Array1::from_iter(features.rows().into_iter().map(|row| {
        let logit: f64 = row.iter().zip(mean.iter()).map(|(x, m)| x * m).sum();
        let p = 1.0 / (1.0 + (-logit).exp());
        if rng.gen::<f64>() < p {
            1.0
        } else {
            0.0
        }
    }));
    AgentDataset::from_parts(features, labels, mean.clone(), 0.0, delta, 0)
}

fn gen_features<R: Rng>(n: usize, d: usize, delta: f64, rng: &mut R) -> Array2<f64> {
    let mut buf = vec![0.0; n * d];
    rng::fill_standard_normal(rng, &mut buf);
    buf.iter_mut().for_each(|x| *x *= delta);
    Array2::from_shape_vec((n, d), buf).expect("shape")
}

/// Builds the scenario described by `cfg` (training and evaluation sets).
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    match cfg.scenario_kind {
        ScenarioKind::SingleOutlier => gen_outlier_scenario(cfg),
        ScenarioKind::MultiCluster => gen_multi_cluster_scenario(cfg),
    }
}

/// Single-outlier scenario: agents `0..E-1` share a cluster around a common
/// center; agent `E-1` sits at distance exactly `inter_distance` from it.
pub fn gen_outlier_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    if cfg.scenario_kind != ScenarioKind::SingleOutlier {
        return Err(Error::InvalidConfig {
            field: "scenario_kind",
            reason: "expected single_outlier".into(),
        });
    }
    let streams = Streams::new(cfg.seed);
    let mut center_rng = streams.stream(Purpose::Centers, 0);
    let shared = Array1::from_vec(rng::uniform_on_sphere(&mut center_rng, cfg.dimension, cfg.inter_distance));
    let direction = Array1::from_vec(rng::uniform_on_sphere(&mut center_rng, cfg.dimension, 1.0));
    // Nudged just past R so the separation holds under rounding.
    let outlier = &shared + &(direction * (cfg.inter_distance * (1.0 + 1e-12)));
    let spec = ClusterSpec {
        centers: vec![shared, outlier],
        intra_radius: cfg.intra_radius,
        inter_distance: cfg.inter_distance,
    };
    spec.check()?;
    let mut assignment = vec![0usize; cfg.num_agents - 1];
    assignment.push(1);
    build_scenario(cfg, spec, assignment)
}

/// Multi-cluster scenario: cluster 0 holds the majority of agents and each
/// further cluster `m` holds `M - m` agents (for `E = 10, M = 3` that is the
/// 7/2/1 split).
pub fn gen_multi_cluster_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    if cfg.scenario_kind != ScenarioKind::MultiCluster {
        return Err(Error::InvalidConfig {
            field: "scenario_kind",
            reason: "expected multi_cluster".into(),
        });
    }
    let streams = Streams::new(cfg.seed);
    let mut center_rng = streams.stream(Purpose::Centers, 0);
    let mut spec = gen_cluster_centers(cfg.num_clusters, cfg.dimension, cfg.inter_distance, &mut center_rng)?;
    spec.intra_radius = cfg.intra_radius;
    spec.check()?;
    let minority: usize = (1..cfg.num_clusters).sum();
    let mut assignment = vec![0usize; cfg.num_agents - minority];
    for m in 1..cfg.num_clusters {
        assignment.extend(std::iter::repeat_n(m, cfg.num_clusters - m));
    }
    build_scenario(cfg, spec, assignment)
}

fn build_scenario(cfg: &ScenarioConfig, spec: ClusterSpec, assignment: Vec<usize>) -> Result<Scenario> {
    let streams = Streams::new(cfg.seed);
    let means = centered_agent_means(&spec, &assignment, &streams);
    let gen_split = |purpose: Purpose| -> Vec<AgentDataset> {
        means
            .par_iter()
            .enumerate()
            .map(|(e, mean)| {
                let mut rng = streams.stream(purpose, e as u64);
                let mut data = match cfg.model_kind {
                    crate::config::ModelKindTag::LinearRegression => {
                        gen_regression_dataset(mean, cfg.samples_per_agent, cfg.feature_std, cfg.noise_std, &mut rng)
                    }
                    crate::config::ModelKindTag::RidgeLogistic => {
                        gen_classification_dataset(mean, cfg.samples_per_agent, cfg.feature_std, &mut rng)
                    }
                };
                data.true_cluster = assignment[e];
                data
            })
            .collect()
    };
    let train = gen_split(Purpose::TrainData);
    let eval = gen_split(Purpose::EvalData);
    Ok(Scenario {
        train,
        eval,
        cluster_spec: spec,
        assignment,
    })
}

/// Agent means with the per-cluster perturbation cloud centered on its
/// cluster center: raw ball draws are shifted so each cluster's empirical
/// mean equals its center exactly, then rescaled (if needed) to stay inside
/// the `intra_radius` ball. Centering makes the converged per-cluster
/// average an unbiased stand-in for the center itself.
fn centered_agent_means(spec: &ClusterSpec, assignment: &[usize], streams: &Streams) -> Vec<Array1<f64>> {
    let dim = spec.centers[0].len();
    let mut perturbations: Vec<Array1<f64>> = assignment
        .iter()
        .enumerate()
        .map(|(e, _)| {
            let mut rng = streams.stream(Purpose::AgentMean, e as u64);
            Array1::from_vec(rng::uniform_in_ball(&mut rng, dim, spec.intra_radius))
        })
        .collect();
    for m in 0..spec.num_clusters() {
        let members: Vec<usize> = (0..assignment.len()).filter(|&e| assignment[e] == m).collect();
        if members.is_empty() {
            continue;
        }
        let mut mean = Array1::<f64>::zeros(dim);
        for &e in &members {
            mean += &perturbations[e];
        }
        mean /= members.len() as f64;
        let mut max_norm = 0.0f64;
        for &e in &members {
            perturbations[e] = &perturbations[e] - &mean;
            max_norm = max_norm.max(perturbations[e].iter().map(|x| x * x).sum::<f64>().sqrt());
        }
        let cap = spec.intra_radius * RADIUS_MARGIN;
        if max_norm > cap {
            let scale = cap / max_norm;
            for &e in &members {
                perturbations[e] *= scale;
            }
        }
    }
    assignment
        .iter()
        .zip(perturbations)
        .map(|(&m, u)| &spec.centers[m] + &u)
        .collect()
}
