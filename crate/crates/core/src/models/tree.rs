//! CART regression/classification trees on raw (unscaled) features.
//!
//! Every feature keeps a presorted list of the training rows; splitting a
//! node stably partitions each list so a node always owns one contiguous
//! range in all of them. Split search is therefore exact and linear in the
//! node size per feature.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    /// Sum of squared deviations (variance reduction).
    Variance,
    /// Gini impurity of 0/1 targets.
    Gini,
}

impl Criterion {
    /// Impurity of a node with `n` targets summing to `sum` (squares to `sum_sq`),
    /// scaled by `n` so gains are additive.
    fn impurity(self, sum: f64, sum_sq: f64, n: f64) -> f64 {
        match self {
            Criterion::Variance => sum_sq - sum * sum / n,
            Criterion::Gini => {
                let p = sum / n;
                n * 2.0 * p * (1.0 - p)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left as usize).max(go(t, *right as usize)),
            }
        }
        go(self, 0)
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features examined per split; `None` examines all of them.
    pub features_per_split: Option<usize>,
    pub criterion: Criterion,
}

/// Column-major feature matrix with one presorted row order per column.
pub struct SortedColumns<'a> {
    columns: &'a [Vec<f64>],
    sorted: Vec<Vec<u32>>,
}

impl<'a> SortedColumns<'a> {
    pub fn new(columns: &'a [Vec<f64>]) -> Self {
        let sorted = columns
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..col.len() as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self { columns, sorted }
    }

    pub fn num_features(&self) -> usize {
        self.columns.len()
    }

    pub fn num_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }
}

struct Builder<'a, 'b, R, F> {
    cols: &'b SortedColumns<'a>,
    targets: &'b [f64],
    params: TreeParams,
    rng: &'b mut R,
    leaf_value: F,
    /// Per-feature working orders restricted to the sample.
    orders: Vec<Vec<u32>>,
    /// Feature values aligned with `orders`.
    values: Vec<Vec<f64>>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Grows one tree on the rows flagged in `in_sample`.
///
/// `leaf_value` maps the row indices of a leaf to its output.
pub fn grow_tree<R: Rng>(
    cols: &SortedColumns<'_>,
    targets: &[f64],
    in_sample: Option<&[bool]>,
    params: TreeParams,
    rng: &mut R,
    leaf_value: impl FnMut(&[u32]) -> f64,
) -> Tree {
    let orders: Vec<Vec<u32>> = cols
        .sorted
        .iter()
        .map(|s| match in_sample {
            Some(mask) => s.iter().copied().filter(|&r| mask[r as usize]).collect(),
            None => s.clone(),
        })
        .collect();
    let values: Vec<Vec<f64>> = orders
        .iter()
        .zip(cols.columns)
        .map(|(o, col)| o.iter().map(|&r| col[r as usize]).collect())
        .collect();
    let n = orders.first().map_or(0, Vec::len);
    let mut b = Builder {
        cols,
        targets,
        params,
        rng,
        leaf_value,
        orders,
        values,
        goes_left: vec![false; cols.num_rows()],
        scratch: Vec::with_capacity(n),
        nodes: Vec::new(),
    };
    if n == 0 || cols.num_features() == 0 {
        let rows: Vec<u32> = match in_sample {
            Some(mask) => (0..targets.len() as u32).filter(|&r| mask[r as usize]).collect(),
            None => (0..targets.len() as u32).collect(),
        };
        let value = (b.leaf_value)(&rows);
        return Tree {
            nodes: vec![Node::Leaf { value }],
        };
    }
    b.build(0, n, 0);
    Tree { nodes: b.nodes }
}

impl<R: Rng, F: FnMut(&[u32]) -> f64> Builder<'_, '_, R, F> {
    fn build(&mut self, start: usize, end: usize, depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(Node::Leaf { value: 0.0 });
        let split = if depth < self.params.max_depth && end - start >= 2 * self.params.min_leaf {
            self.find_split(start, end)
        } else {
            None
        };
        match split {
            None => {
                let value = (self.leaf_value)(&self.orders[0][start..end]);
                self.nodes[id as usize] = Node::Leaf { value };
            }
            Some(best) => {
                let mid = self.partition(start, end, best.feature, best.threshold, depth + 1);
                let left = self.build(start, mid, depth + 1);
                let right = self.build(mid, end, depth + 1);
                self.nodes[id as usize] = Node::Split {
                    feature: best.feature,
                    threshold: best.threshold,
                    left,
                    right,
                };
            }
        }
        id
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let p = self.cols.num_features();
        match self.params.features_per_split {
            Some(k) if k < p => {
                let mut f = sample(self.rng, p, k).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        }
    }

    fn find_split(&mut self, start: usize, end: usize) -> Option<BestSplit> {
        let crit = self.params.criterion;
        let min_leaf = self.params.min_leaf.max(1);
        let rows = &self.orders[0][start..end];
        let n = rows.len() as f64;
        let (sum, sum_sq) = rows.iter().fold((0.0, 0.0), |(s, q), &r| {
            let y = self.targets[r as usize];
            (s + y, q + y * y)
        });
        let parent = crit.impurity(sum, sum_sq, n);
        if parent <= 0.0 {
            return None;
        }
        let min_gain = parent * 1e-12;

        let mut best: Option<BestSplit> = None;
        for f in self.candidate_features() {
            let vals = &self.values[f][start..end];
            let order = &self.orders[f][start..end];
            let (mut ls, mut lq) = (0.0, 0.0);
            for i in 0..order.len() - 1 {
                let r = order[i] as usize;
                let y = self.targets[r];
                ls += y;
                lq += y * y;
                let nl = i + 1;
                let nr = order.len() - nl;
                if nl < min_leaf {
                    continue;
                }
                if nr < min_leaf {
                    break;
                }
                let a = vals[i];
                let b = vals[i + 1];
                if a == b {
                    continue;
                }
                let gain = parent
                    - crit.impurity(ls, lq, nl as f64)
                    - crit.impurity(sum - ls, sum_sq - lq, nr as f64);
                if gain > min_gain && best.as_ref().is_none_or(|bs| gain > bs.gain) {
                    let mut threshold = 0.5 * (a + b);
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }

    /// Stable partition of the feature orders on `[start, end)`. When both
    /// children become leaves only the first order is kept up to date.
    fn partition(&mut self, start: usize, end: usize, feature: usize, threshold: f64, child_depth: usize) -> usize {
        let col = &self.cols.columns[feature];
        let mut n_left = 0;
        for &r in &self.orders[feature][start..end] {
            let left = col[r as usize] <= threshold;
            self.goes_left[r as usize] = left;
            n_left += usize::from(left);
        }
        let mid = start + n_left;
        let splittable = |n: usize| n >= 2 * self.params.min_leaf;
        let all = child_depth < self.params.max_depth && (splittable(n_left) || splittable(end - mid));
        let count = if all { self.orders.len() } else { 1 };
        let mut scratch_vals = Vec::new();
        for (order, vals) in self.orders.iter_mut().zip(self.values.iter_mut()).take(count) {
            self.scratch.clear();
            scratch_vals.clear();
            let mut w = start;
            for i in start..end {
                let r = order[i];
                if self.goes_left[r as usize] {
                    order[w] = r;
                    vals[w] = vals[i];
                    w += 1;
                } else {
                    self.scratch.push(r);
                    scratch_vals.push(vals[i]);
                }
            }
            order[w..end].copy_from_slice(&self.scratch);
            vals[w..end].copy_from_slice(&scratch_vals);
        }
        mid
    }
}
