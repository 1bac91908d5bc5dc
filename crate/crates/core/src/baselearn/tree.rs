//! Greedy variance-reduction regression tree.
//!
//! Splits minimize the weighted squared error of the two children. Candidate
//! thresholds are midpoints between consecutive distinct feature values; among
//! equal scores the lowest feature index, then the lowest threshold, wins.

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forest::ForestParams;
use super::{check_training_data, weighted_mean};
use crate::error::Result;
use crate::matrix::Matrix;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
        samples: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<TreeNode>,
    n_features: usize,
}

impl Tree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value, .. } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        x.ensure_cols(self.n_features)?;
        Ok((0..x.rows()).map(|i| self.predict_row(x.row(i))).collect())
    }
}

/// The random stream tree `t` of a forest seeded with `seed` uses.
pub fn tree_rng(seed: u64, t: usize) -> ChaCha8Rng {
    seed::rng(seed::derive(seed, t as u64))
}

/// Fits one tree on all rows of `x`. `params.n_trees` and `params.bootstrap`
/// are ignored here.
pub fn fit_tree(x: &Matrix, y: &[f64], w: Option<&[f64]>, params: &ForestParams, rng: &mut ChaCha8Rng) -> Result<Tree> {
    params.validate()?;
    check_training_data(x, y, w, params.min_samples_leaf)?;
    let cols = Columns::new(x);
    let mut sample: Vec<usize> = (0..x.rows()).collect();
    Ok(grow_tree(&cols, y, w, params, &mut sample, rng))
}

/// Column-major feature values plus per-column dense ranks (equal values
/// share a rank), so that nodes can order rows with an integer radix sort.
pub(crate) struct Columns {
    values: Vec<Vec<f64>>,
    ranks: Vec<Vec<u32>>,
    rank_bits: Vec<u32>,
}

impl Columns {
    pub(crate) fn new(x: &Matrix) -> Self {
        let values = x.to_columns();
        let mut ranks = Vec::with_capacity(values.len());
        let mut rank_bits = Vec::with_capacity(values.len());
        for col in &values {
            let mut order: Vec<u32> = (0..col.len() as u32).collect();
            order.sort_unstable_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
            let mut rank = vec![0u32; col.len()];
            let mut r = 0u32;
            for k in 0..order.len() {
                if k > 0 && col[order[k] as usize] != col[order[k - 1] as usize] {
                    r += 1;
                }
                rank[order[k] as usize] = r;
            }
            rank_bits.push(32 - r.leading_zeros());
            ranks.push(rank);
        }
        Self {
            values,
            ranks,
            rank_bits,
        }
    }

    fn len(&self) -> usize {
        self.values.len()
    }
}

/// Stable sort of `(rank << 32) | row` keys by rank.
fn sort_by_rank(keys: &mut Vec<u64>, tmp: &mut Vec<u64>, bits: u32) {
    if keys.len() < 256 {
        keys.sort_by_key(|k| k >> 32);
        return;
    }
    let mut shift = 32;
    while shift < 32 + bits {
        let mut counts = [0usize; 256];
        for &k in keys.iter() {
            counts[((k >> shift) & 0xff) as usize] += 1;
        }
        let mut pos = 0;
        for c in counts.iter_mut() {
            let n = *c;
            *c = pos;
            pos += n;
        }
        tmp.clear();
        tmp.resize(keys.len(), 0);
        for &k in keys.iter() {
            let d = ((k >> shift) & 0xff) as usize;
            tmp[counts[d]] = k;
            counts[d] += 1;
        }
        std::mem::swap(keys, tmp);
        shift += 8;
    }
}

/// Builds a tree over `sample` (row indices into `cols`, duplicates allowed).
pub(crate) fn grow_tree(
    cols: &Columns,
    y: &[f64],
    w: Option<&[f64]>,
    params: &ForestParams,
    sample: &mut [usize],
    rng: &mut ChaCha8Rng,
) -> Tree {
    let n_features = cols.len();
    let mut builder = Builder {
        cols,
        y,
        w,
        max_features: params.max_features.clamp(1, n_features.max(1)),
        max_depth: params.max_depth,
        min_leaf: params.min_samples_leaf.max(1),
        nodes: Vec::new(),
        keys: Vec::with_capacity(sample.len()),
        tmp: Vec::with_capacity(sample.len()),
        rng,
    };
    builder.grow(sample, 0);
    Tree {
        nodes: builder.nodes,
        n_features,
    }
}

struct Builder<'a> {
    cols: &'a Columns,
    y: &'a [f64],
    w: Option<&'a [f64]>,
    max_features: usize,
    max_depth: usize,
    min_leaf: usize,
    nodes: Vec<TreeNode>,
    keys: Vec<u64>,
    tmp: Vec<u64>,
    rng: &'a mut ChaCha8Rng,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Builder<'_> {
    fn weight(&self, i: usize) -> f64 {
        self.w.map_or(1.0, |w| w[i])
    }

    fn leaf(&mut self, sample: &[usize]) -> usize {
        let ys: Vec<f64> = sample.iter().map(|&i| self.y[i]).collect();
        let value = match self.w {
            Some(w) => {
                let ws: Vec<f64> = sample.iter().map(|&i| w[i]).collect();
                weighted_mean(&ys, Some(&ws))
            }
            None => weighted_mean(&ys, None),
        };
        self.nodes.push(TreeNode::Leaf {
            value,
            samples: sample.len(),
        });
        self.nodes.len() - 1
    }

    fn grow(&mut self, sample: &mut [usize], depth: usize) -> usize {
        let n = sample.len();
        let first = self.y[sample[0]];
        let constant = sample.iter().all(|&i| self.y[i] == first);
        if depth >= self.max_depth || n < 2 * self.min_leaf || constant {
            return self.leaf(sample);
        }

        let (mut total_w, mut total_s) = (0.0, 0.0);
        for &i in sample.iter() {
            let wi = self.weight(i);
            total_w += wi;
            total_s += wi * self.y[i];
        }
        if total_w <= 0.0 {
            return self.leaf(sample);
        }
        let parent_score = total_s * total_s / total_w;

        let d = self.cols.len();
        let mut features = index::sample(&mut *self.rng, d, self.max_features).into_vec();
        features.sort_unstable();

        let mut best: Option<Candidate> = None;
        for &f in &features {
            if let Some(c) = self.best_split(sample, f, total_w, total_s) {
                if best.as_ref().is_none_or(|b| c.score > b.score) {
                    best = Some(c);
                }
            }
        }
        let Some(best) = best.filter(|b| b.score - parent_score > 0.0) else {
            return self.leaf(sample);
        };

        let col = &self.cols.values[best.feature];
        let mut lo = 0;
        for k in 0..n {
            if col[sample[k]] <= best.threshold {
                sample.swap(lo, k);
                lo += 1;
            }
        }
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { value: 0.0, samples: 0 });
        let (l, r) = sample.split_at_mut(lo);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    /// Best threshold on feature `f`, scored by `S_L^2/W_L + S_R^2/W_R`.
    fn best_split(&mut self, sample: &[usize], f: usize, total_w: f64, total_s: f64) -> Option<Candidate> {
        let col = &self.cols.values[f];
        let rank = &self.cols.ranks[f];
        self.keys.clear();
        self.keys
            .extend(sample.iter().map(|&i| (u64::from(rank[i]) << 32) | i as u64));
        sort_by_rank(&mut self.keys, &mut self.tmp, self.cols.rank_bits[f]);

        let n = self.keys.len();
        let (mut wl, mut sl) = (0.0, 0.0);
        let mut best: Option<Candidate> = None;
        for k in 0..n - 1 {
            let key = self.keys[k];
            let i = (key & 0xffff_ffff) as usize;
            let wi = self.w.map_or(1.0, |w| w[i]);
            wl += wi;
            sl += wi * self.y[i];
            let left_n = k + 1;
            if left_n < self.min_leaf {
                continue;
            }
            if n - left_n < self.min_leaf {
                break;
            }
            let next_key = self.keys[k + 1];
            if key >> 32 == next_key >> 32 {
                continue;
            }
            let wr = total_w - wl;
            if wl <= 0.0 || wr <= 0.0 {
                continue;
            }
            let sr = total_s - sl;
            let score = sl * sl / wl + sr * sr / wr;
            if best.as_ref().is_none_or(|b| score > b.score) {
                let v = col[i];
                let next = col[(next_key & 0xffff_ffff) as usize];
                let mut threshold = v + (next - v) / 2.0;
                if threshold >= next {
                    threshold = v;
                }
                best = Some(Candidate {
                    feature: f,
                    threshold,
                    score,
                });
            }
        }
        best
    }
}

/// Uniform row resample with replacement.
pub(crate) fn bootstrap_sample<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}
