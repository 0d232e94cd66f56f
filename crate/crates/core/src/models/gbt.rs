//! Stage-wise gradient boosting of CART trees.
//!
//! Regression minimizes squared loss starting from the target mean.
//! Classification minimizes log loss through a sigmoid link, starting from
//! the logit of the base rate, with Newton-step leaf values.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, Criterion, SortedColumns, Tree, TreeParams};
use super::{sigmoid, Task};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: 3,
            learning_rate: 0.1,
            min_leaf: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boosted {
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl Boosted {
    /// Additive score before the link function.
    pub fn raw(&self, x: &[f64]) -> f64 {
        self.init + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict(&self, x: &[f64], task: Task) -> f64 {
        match task {
            Task::Classification => sigmoid(self.raw(x)),
            Task::Regression => self.raw(x),
        }
    }
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

pub fn fit(task: Task, columns: &[Vec<f64>], rows: &[Vec<f64>], y: &[f64], p: &GbtParams, seed: u64) -> Boosted {
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let init = match task {
        Task::Regression => mean,
        Task::Classification => logit(mean),
    };
    let sorted = SortedColumns::new(columns);
    let params = TreeParams {
        max_depth: p.max_depth,
        min_leaf: p.min_leaf,
        features_per_split: None,
        criterion: Criterion::Variance,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = vec![init; n];
    let mut residual = vec![0.0; n];
    let mut hessian = vec![0.0; n];
    let mut trees = Vec::with_capacity(p.n_trees);
    for _ in 0..p.n_trees {
        for i in 0..n {
            match task {
                Task::Regression => residual[i] = y[i] - raw[i],
                Task::Classification => {
                    let prob = sigmoid(raw[i]);
                    residual[i] = y[i] - prob;
                    hessian[i] = prob * (1.0 - prob);
                }
            }
        }
        let tree = grow_tree(&sorted, &residual, None, params, &mut rng, |leaf| {
            let g: f64 = leaf.iter().map(|&r| residual[r as usize]).sum();
            match task {
                Task::Regression => g / leaf.len().max(1) as f64,
                Task::Classification => {
                    let h: f64 = leaf.iter().map(|&r| hessian[r as usize]).sum();
                    if h > 1e-12 {
                        g / h
                    } else {
                        0.0
                    }
                }
            }
        });
        for (r, row) in raw.iter_mut().zip(rows) {
            *r += p.learning_rate * tree.predict(row);
        }
        trees.push(tree);
    }
    Boosted {
        init,
        learning_rate: p.learning_rate,
        trees,
    }
}
