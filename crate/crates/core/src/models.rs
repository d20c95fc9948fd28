//! Loss models: linear regression (MSE) and ridge-regularized binary
//! logistic regression, with exact gradients and the closed-form population
//! quantities available for the Gaussian linear model.
//!
//! All reductions run in fixed sample order so repeated runs are
//! bit-reproducible.

use ndarray::Array1;
use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};

use crate::data_synth::AgentDataset;
use crate::error::{Error, Result};

/// Dense model parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(pub Array1<f64>);

impl ParamVector {
    pub fn zeros(dim: usize) -> Self {
        Self(Array1::zeros(dim))
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(Array1::from_vec(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice().expect("contiguous")
    }
}

// Checkpoints store a parameter vector as a plain JSON array of numbers.
impl Serialize for ParamVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.0.len()))?;
        for x in self.0.iter() {
            seq.serialize_element(x)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for ParamVector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        Ok(ParamVector(Array1::from_vec(Vec::<f64>::deserialize(deserializer)?)))
    }
}

/// The set of per-cluster parameter vectors maintained by the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModels {
    pub weights: Vec<ParamVector>,
}

impl ClusterModels {
    pub fn num_models(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.weights.first().map(ParamVector::dim).unwrap_or(0)
    }
}

/// Which loss family a run trains, plus the ridge strength for the
/// strongly convex variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    LinearRegression,
    /// Binary logistic regression with an L2 penalty of `ridge_lambda / 2 * ||w||^2`
    /// added to the training objective. `ridge_lambda > 0` makes the loss
    /// strongly convex with modulus `ridge_lambda`.
    RidgeLogistic { ridge_lambda: f64 },
}

impl ModelKind {
    pub fn is_classification(&self) -> bool {
        matches!(self, ModelKind::RidgeLogistic { .. })
    }
}

fn check_dim(w: &ParamVector, data: &AgentDataset) -> Result<()> {
    if w.dim() != data.dimension() {
        return Err(Error::DimensionMismatch {
            expected: data.dimension(),
            got: w.dim(),
        });
    }
    Ok(())
}

fn dot(w: &Array1<f64>, row: ndarray::ArrayView1<'_, f64>) -> f64 {
    w.iter().zip(row.iter()).map(|(a, b)| a * b).sum()
}

/// `ln(1 + e^z)` without overflow for |z| up to f64 range.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Training objective: mean squared error for the linear model, mean
/// negative log-likelihood plus the ridge term for logistic.
pub fn empirical_loss(model: ModelKind, w: &ParamVector, data: &AgentDataset) -> Result<f64> {
    check_dim(w, data)?;
    Ok(match model {
        ModelKind::LinearRegression => mean_squared_error(w, data),
        ModelKind::RidgeLogistic { ridge_lambda } => {
            pointwise_logistic_loss(w, data) + 0.5 * ridge_lambda * w.0.iter().map(|x| x * x).sum::<f64>()
        }
    })
}

/// Mean per-sample loss without any regularizer: the quantity used for
/// population-loss estimates and soft-label updates.
pub fn pointwise_loss(model: ModelKind, w: &ParamVector, data: &AgentDataset) -> Result<f64> {
    check_dim(w, data)?;
    Ok(match model {
        ModelKind::LinearRegression => mean_squared_error(w, data),
        ModelKind::RidgeLogistic { .. } => pointwise_logistic_loss(w, data),
    })
}

fn mean_squared_error(w: &ParamVector, data: &AgentDataset) -> f64 {
    let n = data.num_samples();
    let mut acc = 0.0;
    for (row, &y) in data.features.rows().into_iter().zip(data.labels.iter()) {
        let r = dot(&w.0, row) - y;
        acc += r * r;
    }
    acc / n as f64
}

fn pointwise_logistic_loss(w: &ParamVector, data: &AgentDataset) -> f64 {
    let n = data.num_samples();
    let mut acc = 0.0;
    for (row, &y) in data.features.rows().into_iter().zip(data.labels.iter()) {
        let z = dot(&w.0, row);
        // NLL of a Bernoulli with logit z: softplus(z) - y*z.
        acc += softplus(z) - y * z;
    }
    acc / n as f64
}

/// Exact gradient of `empirical_loss`.
pub fn gradient(model: ModelKind, w: &ParamVector, data: &AgentDataset) -> Result<ParamVector> {
    check_dim(w, data)?;
    let n = data.num_samples() as f64;
    let d = data.dimension();
    let mut g = vec![0.0; d];
    match model {
        ModelKind::LinearRegression => {
            for (row, &y) in data.features.rows().into_iter().zip(data.labels.iter()) {
                let r = 2.0 * (dot(&w.0, row) - y) / n;
                for (gi, &xi) in g.iter_mut().zip(row.iter()) {
                    *gi += r * xi;
                }
            }
        }
        ModelKind::RidgeLogistic { ridge_lambda } => {
            for (row, &y) in data.features.rows().into_iter().zip(data.labels.iter()) {
                let r = (sigmoid(dot(&w.0, row)) - y) / n;
                for (gi, &xi) in g.iter_mut().zip(row.iter()) {
                    *gi += r * xi;
                }
            }
            for (gi, &wi) in g.iter_mut().zip(w.0.iter()) {
                *gi += ridge_lambda * wi;
            }
        }
    }
    Ok(ParamVector::from_vec(g))
}

/// Model output for one input point.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Scalar(f64),
    /// Class probabilities `[P(y=0), P(y=1)]`, summing to 1.
    Probs(Vec<f64>),
}

pub fn predict(model: ModelKind, w: &ParamVector, x: &Array1<f64>) -> Prediction {
    match model {
        ModelKind::LinearRegression => Prediction::Scalar(w.0.iter().zip(x.iter()).map(|(a, b)| a * b).sum()),
        ModelKind::RidgeLogistic { .. } => {
            let p = sigmoid(w.0.iter().zip(x.iter()).map(|(a, b)| a * b).sum());
            Prediction::Probs(vec![1.0 - p, p])
        }
    }
}

/// Exact population MSE of weight `w` under the generating model
/// `y = mu^T x + eps`, `x ~ N(0, delta^2 I)`, `eps ~ N(0, sigma^2)`:
/// `sigma^2 + delta^2 ||w - mu||^2`.
pub fn analytic_population_loss_linear(w: &ParamVector, mu: &Array1<f64>, delta: f64, sigma: f64) -> f64 {
    sigma * sigma + analytic_excess_risk_linear(w, mu, delta)
}

/// Excess risk of `w` over the Bayes optimum for the same generating model:
/// `delta^2 ||w - mu||^2`.
pub fn analytic_excess_risk_linear(w: &ParamVector, mu: &Array1<f64>, delta: f64) -> f64 {
    let sq: f64 = w.0.iter().zip(mu.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    delta * delta * sq
}

/// Probability floor/ceiling for ensemble log-losses, guarding `ln(0)` when
/// a saturated sigmoid rounds to exactly 0 or 1.
const PROB_CLAMP: (f64, f64) = (1e-300, 1.0 - 1e-16);

/// Mean per-sample loss of the soft-label ensemble predictor
/// `sum_m pi_m h_{w_m}(x)`: squared error of the averaged prediction for
/// regression, log-loss of the averaged probability for classification.
/// With a single model and weight 1 this reproduces the plain pointwise
/// loss computation bit for bit.
pub fn ensemble_pointwise_loss(model: ModelKind, weights: &[ParamVector], pi_row: &[f64], data: &AgentDataset) -> Result<f64> {
    debug_assert_eq!(weights.len(), pi_row.len());
    for w in weights {
        check_dim(w, data)?;
    }
    let n = data.num_samples();
    let mut acc = 0.0;
    match model {
        ModelKind::LinearRegression => {
            for (row, &y) in data.features.rows().into_iter().zip(data.labels.iter()) {
                let mut pred = 0.0;
                for (w, &pi) in weights.iter().zip(pi_row.iter()) {
                    pred += pi * dot(&w.0, row);
                }
                let r = pred - y;
                acc += r * r;
            }
        }
        ModelKind::RidgeLogistic { .. } => {
            for (row, &y) in data.features.rows().into_iter().zip(data.labels.iter()) {
                let mut p = 0.0;
                for (w, &pi) in weights.iter().zip(pi_row.iter()) {
                    p += pi * sigmoid(dot(&w.0, row));
                }
                let p = p.clamp(PROB_CLAMP.0, PROB_CLAMP.1);
                acc -= if y == 1.0 { p.ln() } else { (1.0 - p).ln() };
            }
        }
    }
    Ok(acc / n as f64)
}

/// Upper bound on the smoothness constant of `empirical_loss` derived from
/// the data (trace bound on the Hessian's top eigenvalue).
pub fn smoothness_upper_bound(model: ModelKind, data: &AgentDataset) -> f64 {
    let n = data.num_samples() as f64;
    let mean_sq_norm: f64 = data.features.iter().map(|x| x * x).sum::<f64>() / n;
    match model {
        ModelKind::LinearRegression => 2.0 * mean_sq_norm,
        ModelKind::RidgeLogistic { ridge_lambda } => 0.25 * mean_sq_norm + ridge_lambda,
    }
}
