use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::check_training_data;
use super::tree::{bootstrap_sample, grow_tree, tree_rng, Columns, Tree};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Random forest configuration. Defaults: 100 trees, 8 candidate features,
/// depth 10, 100 rows per leaf, bootstrap on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Candidate features per split; clamped to the feature count at fit time.
    pub max_features: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub seed: u64,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_features: 8,
            max_depth: 10,
            min_samples_leaf: 100,
            seed: 0,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Param("n_trees must be at least 1".into()));
        }
        if self.max_features == 0 {
            return Err(Error::Param("max_features must be at least 1".into()));
        }
        if self.max_depth == 0 {
            return Err(Error::Param("max_depth must be at least 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Param("min_samples_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<Tree>,
    params: ForestParams,
    n_features: usize,
    target_mean: f64,
}

impl ForestModel {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn target_mean(&self) -> f64 {
        self.target_mean
    }

    /// Arithmetic mean of the per-tree predictions.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        x.ensure_cols(self.n_features)?;
        let k = self.trees.len() as f64;
        Ok((0..x.rows())
            .map(|i| {
                let row = x.row(i);
                self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / k
            })
            .collect())
    }

    /// Same trees in a different order.
    pub fn with_tree_order(&self, order: &[usize]) -> Self {
        Self {
            trees: order.iter().map(|&i| self.trees[i].clone()).collect(),
            ..self.clone()
        }
    }
}

/// Fits `n_trees` trees in parallel. Tree `t` draws from [`tree_rng`]`(seed, t)`,
/// so the result does not depend on scheduling.
pub fn fit_forest(x: &Matrix, y: &[f64], w: Option<&[f64]>, params: &ForestParams) -> Result<ForestModel> {
    params.validate()?;
    check_training_data(x, y, w, params.min_samples_leaf)?;
    let cols = Columns::new(x);
    let n = x.rows();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(params.seed, t);
            let mut sample = if params.bootstrap {
                bootstrap_sample(n, &mut rng)
            } else {
                (0..n).collect()
            };
            grow_tree(&cols, y, w, params, &mut sample, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        trees,
        params: params.clone(),
        n_features: x.cols(),
        target_mean: y.iter().sum::<f64>() / n as f64,
    })
}
