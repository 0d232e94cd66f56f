//! L2-regularized logistic regression (accelerated full-batch gradient
//! descent) and ridge regression (normal equations). Both work on
//! standardized features and leave the bias unpenalized.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{sigmoid, Task};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LinearParams {
    fn default() -> Self {
        Self {
            l2: 1.0,
            max_iter: 10_000,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Iterations used (0 for the closed form).
    pub iterations: usize,
}

impl LinearModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn predict(&self, x: &[f64], task: Task) -> f64 {
        match task {
            Task::Classification => sigmoid(self.decision(x)),
            Task::Regression => self.decision(x),
        }
    }
}

fn gram(x: &[Vec<f64>], with_bias: bool) -> DMatrix<f64> {
    let d = x.first().map_or(0, Vec::len) + usize::from(with_bias);
    let mut g = DMatrix::zeros(d, d);
    let mut z = vec![0.0; d];
    for row in x {
        z[..row.len()].copy_from_slice(row);
        if with_bias {
            z[d - 1] = 1.0;
        }
        for i in 0..d {
            if z[i] == 0.0 {
                continue;
            }
            for j in i..d {
                g[(i, j)] += z[i] * z[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            g[(i, j)] = g[(j, i)];
        }
    }
    g
}

/// Minimizes `mean(log loss) + l2 / (2n) * |w|²` with Nesterov-accelerated
/// gradient steps of size `1/L`, `L` the Lipschitz constant of the gradient.
pub fn fit_logistic(x: &[Vec<f64>], y: &[f64], p: &LinearParams) -> LinearModel {
    let n = x.len() as f64;
    let d = x.first().map_or(0, Vec::len);
    let g = gram(x, true) / n;
    let max_eig = g.symmetric_eigenvalues().max().max(0.0);
    let lipschitz = 0.25 * max_eig + p.l2 / n;
    let step = 1.0 / lipschitz.max(1e-12);

    let gradient = |theta: &[f64]| -> Vec<f64> {
        let mut grad = vec![0.0; d + 1];
        for (row, &t) in x.iter().zip(y) {
            let z = theta[d] + row.iter().zip(theta).map(|(v, w)| v * w).sum::<f64>();
            let r = sigmoid(z) - t;
            for (gj, v) in grad.iter_mut().zip(row) {
                *gj += r * v;
            }
            grad[d] += r;
        }
        for (j, gj) in grad.iter_mut().enumerate() {
            *gj /= n;
            if j < d {
                *gj += p.l2 / n * theta[j];
            }
        }
        grad
    };

    let mut theta = vec![0.0; d + 1];
    let mut prev = theta.clone();
    let mut momentum_t: f64 = 1.0;
    let mut iterations = 0;
    for it in 0..p.max_iter {
        iterations = it + 1;
        let next_t = 0.5 * (1.0 + (1.0 + 4.0 * momentum_t * momentum_t).sqrt());
        let beta = (momentum_t - 1.0) / next_t;
        let look: Vec<f64> = theta
            .iter()
            .zip(&prev)
            .map(|(a, b)| a + beta * (a - b))
            .collect();
        let grad = gradient(&look);
        let new: Vec<f64> = look.iter().zip(&grad).map(|(v, gr)| v - step * gr).collect();
        // restart momentum when the step moves against the gradient
        let uphill: f64 = grad
            .iter()
            .zip(new.iter().zip(&theta))
            .map(|(gr, (a, b))| gr * (a - b))
            .sum();
        prev = std::mem::replace(&mut theta, new);
        momentum_t = if uphill > 0.0 { 1.0 } else { next_t };
        let gnorm = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm < p.tol {
            break;
        }
    }
    LinearModel {
        bias: theta[d],
        weights: theta[..d].to_vec(),
        iterations,
    }
}

/// Closed-form ridge on standardized features: the bias is the target mean.
pub fn fit_ridge(x: &[Vec<f64>], y: &[f64], p: &LinearParams) -> Result<LinearModel> {
    let n = x.len();
    let d = x.first().map_or(0, Vec::len);
    let y_mean = y.iter().sum::<f64>() / n as f64;
    // standardized columns are centered, so the bias decouples
    let mut a = gram(x, false);
    for i in 0..d {
        a[(i, i)] += p.l2;
    }
    let mut b = DVector::zeros(d);
    for (row, &t) in x.iter().zip(y) {
        for (j, v) in row.iter().enumerate() {
            b[j] += v * (t - y_mean);
        }
    }
    let singular = || {
        Error::numeric(format!(
            "ridge normal equations are singular at l2 = {}; use a larger l2",
            p.l2
        ))
    };
    let chol = a.cholesky().ok_or_else(singular)?;
    let diag_min = chol.l().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(diag_min > 1e-10) {
        return Err(singular());
    }
    let w = chol.solve(&b);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(singular());
    }
    Ok(LinearModel {
        weights: w.iter().copied().collect(),
        bias: y_mean,
        iterations: 0,
    })
}
