//! Random forest of CART regression trees.
//!
//! Splits maximize the reduction in squared error and consider every feature
//! at every node. Thresholds are midpoints between consecutive distinct
//! values; a sample goes left when `x <= threshold`. Equal-gain candidates
//! resolve to the lowest feature index, then the lowest threshold.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RfHyperparams;

/// A tree stored as parallel arrays. Node 0 is the root; a node is a leaf
/// when `left[i] == 0` (children always come after their parent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub feature: Vec<usize>,
    pub threshold: Vec<f64>,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub d: usize,
    pub trees: Vec<Tree>,
}

struct Builder<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    max_depth: usize,
    min_samples_split: usize,
    tree: Tree,
}

struct Split {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Builder<'_> {
    fn push_leaf(&mut self, value: f64) -> usize {
        let t = &mut self.tree;
        t.feature.push(0);
        t.threshold.push(0.0);
        t.left.push(0);
        t.right.push(0);
        t.value.push(value);
        t.value.len() - 1
    }

    fn best_split(&self, idx: &[usize]) -> Option<Split> {
        let n = idx.len() as f64;
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let parent = total * total / n;
        let mut best: Option<Split> = None;
        let mut order = idx.to_vec();
        for f in 0..self.x.ncols() {
            order.sort_by(|&a, &b| self.x[(a, f)].total_cmp(&self.x[(b, f)]).then(a.cmp(&b)));
            let mut left_sum = 0.0;
            for p in 1..order.len() {
                left_sum += self.y[order[p - 1]];
                let (lo, hi) = (self.x[(order[p - 1], f)], self.x[(order[p], f)]);
                if lo == hi {
                    continue;
                }
                let nl = p as f64;
                let right_sum = total - left_sum;
                // SSE reduction up to the constant sum of squares
                let score = left_sum * left_sum / nl + right_sum * right_sum / (n - nl) - parent;
                let better = match &best {
                    None => true,
                    Some(b) => score > b.score + 1e-12 * b.score.abs().max(1.0),
                };
                if better {
                    let mid = 0.5 * (lo + hi);
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(Split {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let n = idx.len();
        let mean = bounded_mean(idx.iter().map(|&i| self.y[i]));
        let pure = idx.iter().all(|&i| self.y[i] == self.y[idx[0]]);
        if pure || depth >= self.max_depth || n < self.min_samples_split {
            return self.push_leaf(mean);
        }
        let Some(split) = self.best_split(&idx) else {
            return self.push_leaf(mean);
        };
        let node = self.push_leaf(mean);
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| self.x[(i, split.feature)] <= split.threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        let t = &mut self.tree;
        t.feature[node] = split.feature;
        t.threshold[node] = split.threshold;
        t.left[node] = left;
        t.right[node] = right;
        node
    }
}

/// Grows one tree on the rows listed in `sample` (repeats allowed).
pub fn grow_tree(x: &DMatrix<f64>, y: &[f64], sample: Vec<usize>, hp: &RfHyperparams) -> Tree {
    let mut b = Builder {
        x,
        y,
        max_depth: hp.max_depth,
        min_samples_split: hp.min_samples_split.max(2),
        tree: Tree {
            feature: vec![],
            threshold: vec![],
            left: vec![],
            right: vec![],
            value: vec![],
        },
    };
    b.grow(sample, 0);
    b.tree
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        while self.left[i] != 0 {
            i = if row[self.feature[i]] <= self.threshold[i] {
                self.left[i]
            } else {
                self.right[i]
            };
        }
        self.value[i]
    }

    pub fn n_nodes(&self) -> usize {
        self.value.len()
    }
}

/// Tree `t` draws its bootstrap sample from ChaCha stream `t` of `seed`, so the
/// forest is identical whether trees are grown in parallel or not.
pub fn fit_forest(x: &DMatrix<f64>, y: &[f64], hp: &RfHyperparams, seed: u64) -> ForestModel {
    let n = x.nrows();
    let trees = (0..hp.n_trees)
        .into_par_iter()
        .map(|t| {
            let sample: Vec<usize> = if hp.bootstrap {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t as u64);
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow_tree(x, y, sample, hp)
        })
        .collect();
    ForestModel { d: x.ncols(), trees }
}

/// Arithmetic mean clamped to the range of its inputs, so summation rounding
/// can never push an average of identical values outside them.
fn bounded_mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n, mut lo, mut hi) = (0.0, 0usize, f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        sum += v;
        n += 1;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (sum / n as f64).clamp(lo, hi)
}

impl ForestModel {
    /// Mean of the per-tree predictions.
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        x.row_iter()
            .map(|r| {
                let row: Vec<f64> = r.iter().copied().collect();
                bounded_mean(self.trees.iter().map(|t| t.predict_row(&row)))
            })
            .collect()
    }
}
