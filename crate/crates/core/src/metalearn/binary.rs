//! Classic two-group X-Learner, `tau = e * tau_0 + (1 - e) * tau_1`.
//!
//! Kept as a standalone reference for the multi-arm version: with one arm
//! and shared seeds both produce bit-identical predictions.

use serde::{Deserialize, Serialize};

use crate::baselearn::{BaseLearner, Regressor};
use crate::dataset::ExperimentDataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::{self, tags};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryXLearner {
    pub mu0: Regressor,
    pub mu1: Regressor,
    pub tau0: Regressor,
    pub tau1: Regressor,
    /// Share of treated rows, `P(W = 1)`.
    pub propensity: f64,
}

/// `train` must have exactly a control (index 0) and one treatment (index 1).
pub fn fit_binary_x_learner(train: &ExperimentDataset, learner: &BaseLearner) -> Result<BinaryXLearner> {
    if train.groups().len() != 2 || train.groups().control() != Some(0) {
        return Err(Error::Validation("two-group X-Learner needs control plus one treatment".into()));
    }
    let seed_of = |tag, g: u64| seed::derive2(learner.seed(), tag, g);
    let mut control_rows = Vec::new();
    let mut treated_rows = Vec::new();
    for (i, &w) in train.assignment().iter().enumerate() {
        if w == 1 {
            treated_rows.push(i);
        } else {
            control_rows.push(i);
        }
    }
    let x0 = train.features().select_rows(&control_rows);
    let x1 = train.features().select_rows(&treated_rows);
    let y0: Vec<f64> = control_rows.iter().map(|&i| train.outcome()[i]).collect();
    let y1: Vec<f64> = treated_rows.iter().map(|&i| train.outcome()[i]).collect();

    let mu0 = learner.fit(&x0, &y0, None, seed_of(tags::OUTCOME, 0))?;
    let mu1 = learner.fit(&x1, &y1, None, seed_of(tags::OUTCOME, 1))?;

    let mu1_on_control = mu1.predict(&x0)?;
    let d0: Vec<f64> = (0..y0.len()).map(|i| mu1_on_control[i] - y0[i]).collect();
    let mu0_on_treated = mu0.predict(&x1)?;
    let d1: Vec<f64> = (0..y1.len()).map(|i| y1[i] - mu0_on_treated[i]).collect();

    let tau0 = learner.fit(&x0, &d0, None, seed_of(tags::CONTROL_EFFECT, 1))?;
    let tau1 = learner.fit(&x1, &d1, None, seed_of(tags::TREATED_EFFECT, 1))?;
    Ok(BinaryXLearner {
        mu0,
        mu1,
        tau0,
        tau1,
        propensity: treated_rows.len() as f64 / train.len() as f64,
    })
}

impl BinaryXLearner {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        let t0 = self.tau0.predict(x)?;
        let t1 = self.tau1.predict(x)?;
        let e = self.propensity;
        Ok(t0.iter().zip(&t1).map(|(a, b)| e * a + (1.0 - e) * b).collect())
    }
}
