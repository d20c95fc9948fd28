//! Numerical verification utilities: finite-difference gradients, convexity
//! and smoothness witnesses, and a small dense solver for least-squares
//! reference solutions. These deliberately avoid the analytic gradient path
//! so they can serve as independent checks of it.

use ndarray::{Array1, Array2};

use crate::data_synth::AgentDataset;
use crate::error::Result;
use crate::models::{empirical_loss, gradient, ModelKind, ParamVector};

/// Central finite-difference gradient of the training objective.
pub fn finite_difference_gradient(model: ModelKind, w: &ParamVector, data: &AgentDataset, h: f64) -> Result<Vec<f64>> {
    let mut g = vec![0.0; w.dim()];
    for (i, slot) in g.iter_mut().enumerate() {
        let mut plus = w.clone();
        plus.0[i] += h;
        let mut minus = w.clone();
        minus.0[i] -= h;
        *slot = (empirical_loss(model, &plus, data)? - empirical_loss(model, &minus, data)?) / (2.0 * h);
    }
    Ok(g)
}

/// Worst componentwise relative error between the analytic and
/// finite-difference gradients. The denominator is floored at `1e-3` so
/// components that happen to vanish are compared absolutely at `1e-8`.
pub fn gradient_max_rel_error(model: ModelKind, w: &ParamVector, data: &AgentDataset) -> Result<f64> {
    let analytic = gradient(model, w, data)?;
    let fd = finite_difference_gradient(model, w, data, 1e-5)?;
    let mut worst = 0.0f64;
    for (a, b) in analytic.0.iter().zip(fd.iter()) {
        let denom = a.abs().max(b.abs()).max(1e-3);
        worst = worst.max((a - b).abs() / denom);
    }
    Ok(worst)
}

/// `<grad(w1) - grad(w2), w1 - w2> - mu ||w1 - w2||^2`; non-negative for a
/// `mu`-strongly convex objective.
pub fn strong_convexity_slack(model: ModelKind, mu: f64, w1: &ParamVector, w2: &ParamVector, data: &AgentDataset) -> Result<f64> {
    let g1 = gradient(model, w1, data)?;
    let g2 = gradient(model, w2, data)?;
    let mut inner = 0.0;
    let mut dist_sq = 0.0;
    for i in 0..w1.dim() {
        let dw = w1.0[i] - w2.0[i];
        inner += (g1.0[i] - g2.0[i]) * dw;
        dist_sq += dw * dw;
    }
    Ok(inner - mu * dist_sq)
}

/// `L ||w1 - w2|| - ||grad(w1) - grad(w2)||`; non-negative when `L` bounds
/// the objective's smoothness constant.
pub fn smoothness_slack(model: ModelKind, lipschitz: f64, w1: &ParamVector, w2: &ParamVector, data: &AgentDataset) -> Result<f64> {
    let g1 = gradient(model, w1, data)?;
    let g2 = gradient(model, w2, data)?;
    let grad_dist: f64 = g1.0.iter().zip(g2.0.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let w_dist: f64 = w1.0.iter().zip(w2.0.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok(lipschitz * w_dist - grad_dist)
}

/// Ordinary-least-squares solution of `X w = y` via the normal equations,
/// solved by Gaussian elimination with partial pivoting. Reference route for
/// tests; no iterative training involved.
#[allow(clippy::needless_range_loop)]
pub fn ols_solve(features: &Array2<f64>, labels: &Array1<f64>) -> ParamVector {
    let d = features.ncols();
    let mut gram = vec![vec![0.0; d + 1]; d];
    for (row, &y) in features.rows().into_iter().zip(labels.iter()) {
        for i in 0..d {
            for j in 0..d {
                gram[i][j] += row[i] * row[j];
            }
            gram[i][d] += row[i] * y;
        }
    }
    // Forward elimination with partial pivoting on the augmented system.
    for col in 0..d {
        let pivot = (col..d).max_by(|&a, &b| gram[a][col].abs().partial_cmp(&gram[b][col].abs()).unwrap()).unwrap();
        gram.swap(col, pivot);
        let head = gram[col][col];
        assert!(head.abs() > 1e-12, "singular normal equations");
        for row in (col + 1)..d {
            let factor = gram[row][col] / head;
            for k in col..=d {
                gram[row][k] -= factor * gram[col][k];
            }
        }
    }
    let mut w = vec![0.0; d];
    for row in (0..d).rev() {
        let mut acc = gram[row][d];
        for k in (row + 1)..d {
            acc -= gram[row][k] * w[k];
        }
        w[row] = acc / gram[row][row];
    }
    ParamVector::from_vec(w)
}

/// Pooled OLS over several agents' data (concatenated samples).
pub fn pooled_ols(datasets: &[&AgentDataset]) -> ParamVector {
    let d = datasets[0].dimension();
    let n: usize = datasets.iter().map(|data| data.num_samples()).sum();
    let mut features = Array2::zeros((n, d));
    let mut labels = Array1::zeros(n);
    let mut offset = 0;
    for data in datasets {
        for (i, (row, &y)) in data.features.rows().into_iter().zip(data.labels.iter()).enumerate() {
            features.row_mut(offset + i).assign(&row);
            labels[offset + i] = y;
        }
        offset += data.num_samples();
    }
    ols_solve(&features, &labels)
}
