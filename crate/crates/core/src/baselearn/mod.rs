//! Regression base learners shared by every meta-learner.
//!
//! [`BaseLearner`] is the unfitted configuration, [`Regressor`] the fitted
//! model. Both the random forest and the training-mean predictor support
//! nonnegative sample weights, which the R-Learner final stage relies on.

mod crossfit;
mod forest;
mod tree;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use crossfit::{crossfit_predict, CrossFitPlan};
pub use forest::{fit_forest, ForestModel, ForestParams};
pub use tree::{fit_tree, tree_rng, Tree, TreeNode};

/// Regression learner configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BaseLearner {
    Forest(ForestParams),
    /// Always predicts the (weighted) training mean.
    Mean,
}

impl Default for BaseLearner {
    fn default() -> Self {
        Self::Forest(ForestParams::default())
    }
}

impl BaseLearner {
    /// Fits with an explicit seed; forests ignore their own `params.seed`.
    pub fn fit(&self, x: &Matrix, y: &[f64], w: Option<&[f64]>, seed: u64) -> Result<Regressor> {
        match self {
            Self::Forest(p) => {
                let params = ForestParams { seed, ..p.clone() };
                fit_forest(x, y, w, &params).map(Regressor::Forest)
            }
            Self::Mean => MeanModel::fit(x, y, w).map(Regressor::Mean),
        }
    }

    /// Smallest training set the learner accepts.
    pub fn min_rows(&self) -> usize {
        match self {
            Self::Forest(p) => p.min_samples_leaf.max(1),
            Self::Mean => 1,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Self::Forest(p) => p.seed,
            Self::Mean => 0,
        }
    }
}

/// A fitted regression model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Regressor {
    Forest(ForestModel),
    Mean(MeanModel),
}

impl Regressor {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        match self {
            Self::Forest(m) => m.predict(x),
            Self::Mean(m) => m.predict(x),
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Self::Forest(m) => m.n_features(),
            Self::Mean(m) => m.n_features,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanModel {
    pub value: f64,
    pub n_features: usize,
}

impl MeanModel {
    pub fn fit(x: &Matrix, y: &[f64], w: Option<&[f64]>) -> Result<Self> {
        check_training_data(x, y, w, 1)?;
        Ok(Self {
            value: weighted_mean(y, w),
            n_features: x.cols(),
        })
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        x.ensure_cols(self.n_features)?;
        Ok(vec![self.value; x.rows()])
    }
}

/// Weighted mean; falls back to the plain mean when all weights are zero.
pub(crate) fn weighted_mean(y: &[f64], w: Option<&[f64]>) -> f64 {
    match w {
        Some(w) => {
            let (mut sw, mut swy) = (0.0, 0.0);
            for (&yi, &wi) in y.iter().zip(w) {
                sw += wi;
                swy += wi * yi;
            }
            if sw > 0.0 {
                swy / sw
            } else {
                y.iter().sum::<f64>() / y.len() as f64
            }
        }
        None => y.iter().sum::<f64>() / y.len() as f64,
    }
}

pub(crate) fn check_training_data(x: &Matrix, y: &[f64], w: Option<&[f64]>, min_rows: usize) -> Result<()> {
    if x.rows() == 0 || y.is_empty() {
        return Err(Error::Insufficient("empty training data".into()));
    }
    if x.rows() != y.len() {
        return Err(Error::Validation(format!(
            "{} feature rows for {} targets",
            x.rows(),
            y.len()
        )));
    }
    if let Some(w) = w {
        if w.len() != y.len() {
            return Err(Error::Validation(format!("{} weights for {} targets", w.len(), y.len())));
        }
        if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Validation("weights must be finite and nonnegative".into()));
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite regression target".into()));
    }
    if x.rows() < min_rows {
        return Err(Error::Insufficient(format!(
            "{} rows, need at least {min_rows}",
            x.rows()
        )));
    }
    Ok(())
}
