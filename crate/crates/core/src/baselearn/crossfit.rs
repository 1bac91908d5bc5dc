use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::BaseLearner;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::{self, tags};

/// K-fold assignment used to produce out-of-fold predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossFitPlan {
    k_folds: usize,
    folds: Vec<usize>,
    seed: u64,
}

impl CrossFitPlan {
    /// Balanced random assignment of `n` rows to `k` folds.
    pub fn new(n: usize, k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::Param(format!("cross-fitting needs at least 2 folds, got {k}")));
        }
        if n < k {
            return Err(Error::Insufficient(format!("{n} rows cannot fill {k} folds")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seed::rng(seed::derive(seed, tags::FOLD)));
        let mut folds = vec![0; n];
        for (pos, &row) in order.iter().enumerate() {
            folds[row] = pos % k;
        }
        Ok(Self { k_folds: k, folds, seed })
    }

    /// Explicit fold labels; every label in `0..k` must be used.
    pub fn from_folds(folds: Vec<usize>, seed: u64) -> Result<Self> {
        let k = folds.iter().max().map_or(0, |m| m + 1);
        if k < 2 {
            return Err(Error::Param("cross-fitting needs at least 2 folds".into()));
        }
        let mut used = vec![false; k];
        for &f in &folds {
            used[f] = true;
        }
        if let Some(f) = used.iter().position(|u| !u) {
            return Err(Error::Param(format!("fold {f} is empty")));
        }
        Ok(Self { k_folds: k, folds, seed })
    }

    pub fn k_folds(&self) -> usize {
        self.k_folds
    }

    pub fn folds(&self) -> &[usize] {
        &self.folds
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    /// Plan over a row subset; folds absent from the subset are dropped and
    /// the remaining labels compacted.
    pub fn restrict(&self, rows: &[usize]) -> Result<Self> {
        let mut present = vec![false; self.k_folds];
        for &r in rows {
            present[self.folds[r]] = true;
        }
        let mut rank = vec![0; self.k_folds];
        let mut next = 0;
        for f in 0..self.k_folds {
            if present[f] {
                rank[f] = next;
                next += 1;
            }
        }
        let folds = rows.iter().map(|&r| rank[self.folds[r]]).collect();
        Self::from_folds(folds, self.seed)
    }
}

/// Out-of-fold predictions: entry `i` comes from a model trained only on rows
/// outside `i`'s fold. Fold `f` trains with seed `derive2(plan.seed, FOLD, f)`.
pub fn crossfit_predict(
    x: &Matrix,
    y: &[f64],
    w: Option<&[f64]>,
    learner: &BaseLearner,
    plan: &CrossFitPlan,
) -> Result<Vec<f64>> {
    if plan.len() != x.rows() || y.len() != x.rows() {
        return Err(Error::Validation(format!(
            "cross-fit plan covers {} rows, data has {}",
            plan.len(),
            x.rows()
        )));
    }
    let per_fold: Vec<(Vec<usize>, Vec<f64>)> = (0..plan.k_folds)
        .into_par_iter()
        .map(|f| {
            let (inside, outside): (Vec<usize>, Vec<usize>) = (0..x.rows()).partition(|&i| plan.folds[i] == f);
            if outside.len() < learner.min_rows() {
                return Err(Error::Insufficient(format!(
                    "fold {f}: {} training rows outside the fold, need {}",
                    outside.len(),
                    learner.min_rows()
                )));
            }
            let xt = x.select_rows(&outside);
            let yt: Vec<f64> = outside.iter().map(|&i| y[i]).collect();
            let wt: Option<Vec<f64>> = w.map(|w| outside.iter().map(|&i| w[i]).collect());
            let model = learner.fit(&xt, &yt, wt.as_deref(), seed::derive2(plan.seed, tags::FOLD, f as u64))?;
            let pred = model.predict(&x.select_rows(&inside))?;
            Ok((inside, pred))
        })
        .collect::<Result<_>>()?;
    let mut out = vec![0.0; x.rows()];
    for (rows, pred) in per_fold {
        for (r, p) in rows.into_iter().zip(pred) {
            out[r] = p;
        }
    }
    Ok(out)
}
