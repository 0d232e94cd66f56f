//! Random forest of CART trees.
//!
//! Each tree sees a row subsample drawn without replacement. Whether a row is
//! in a tree's sample depends only on `(seed, tree index, row key)`, so the
//! fitted forest does not depend on row order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, Criterion, SortedColumns, Tree, TreeParams};
use super::{splitmix64, Task};
use crate::error::{Error, Result};

/// Features examined at each split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSubsample {
    /// `ceil(sqrt(p))` features.
    Sqrt,
    All,
    Fraction(f64),
}

impl FeatureSubsample {
    pub fn count(self, p: usize) -> usize {
        let k = match self {
            FeatureSubsample::Sqrt => (p as f64).sqrt().ceil() as usize,
            FeatureSubsample::All => p,
            FeatureSubsample::Fraction(f) => (f * p as f64).ceil() as usize,
        };
        k.clamp(1, p.max(1))
    }

    pub fn validate(self) -> Result<()> {
        match self {
            FeatureSubsample::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                Err(Error::usage("feature_subsample fraction must lie in (0, 1]"))
            }
            _ => Ok(()),
        }
    }
}

impl std::str::FromStr for FeatureSubsample {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt" => Ok(FeatureSubsample::Sqrt),
            "all" => Ok(FeatureSubsample::All),
            _ => s
                .parse()
                .map(FeatureSubsample::Fraction)
                .map_err(|_| Error::usage(format!("invalid feature_subsample {s:?} (sqrt|all|fraction)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub row_subsample: f64,
    pub feature_subsample: FeatureSubsample,
    pub min_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 12,
            row_subsample: 0.8,
            feature_subsample: FeatureSubsample::Sqrt,
            min_leaf: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    /// Mean of the trees' leaf values (class frequencies for classification).
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

fn in_subsample(seed: u64, tree: usize, key: u64, fraction: f64) -> bool {
    if fraction >= 1.0 {
        return true;
    }
    let h = splitmix64(seed ^ splitmix64(tree as u64 ^ 0x5eed) ^ key.rotate_left(17));
    ((h >> 11) as f64 / (1u64 << 53) as f64) < fraction
}

pub fn fit(task: Task, columns: &[Vec<f64>], y: &[f64], row_keys: &[u64], p: &ForestParams, seed: u64) -> Forest {
    let sorted = SortedColumns::new(columns);
    let params = TreeParams {
        max_depth: p.max_depth,
        min_leaf: p.min_leaf,
        features_per_split: Some(p.feature_subsample.count(columns.len())),
        criterion: match task {
            Task::Classification => Criterion::Gini,
            Task::Regression => Criterion::Variance,
        },
    };
    let trees = (0..p.n_trees)
        .map(|t| {
            let mut mask: Vec<bool> = row_keys
                .iter()
                .map(|&k| in_subsample(seed, t, k, p.row_subsample))
                .collect();
            if !mask.iter().any(|&m| m) {
                mask.iter_mut().for_each(|m| *m = true);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed.wrapping_add(t as u64)));
            grow_tree(&sorted, y, Some(&mask), params, &mut rng, |rows| {
                rows.iter().map(|&r| y[r as usize]).sum::<f64>() / rows.len().max(1) as f64
            })
        })
        .collect();
    Forest { trees }
}
