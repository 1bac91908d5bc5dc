use serde::{Deserialize, Serialize};

use crate::baselearn::{BaseLearner, Regressor};
use crate::dataset::ExperimentDataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::{self, tags};

/// Scores are clipped to `[PROPENSITY_EPS, 1 - PROPENSITY_EPS]`.
pub const PROPENSITY_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensityMode {
    /// Constant group shares, the natural estimate for randomized data.
    #[default]
    Empirical,
    /// One-vs-rest membership regressions, normalized per row.
    Learned,
}

impl std::str::FromStr for PropensityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(Self::Empirical),
            "learned" => Ok(Self::Learned),
            other => Err(Error::Param(format!("unknown propensity mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PropensityModel {
    Empirical { counts: Vec<usize> },
    Learned { models: Vec<Regressor> },
}

/// Clamp to [0,1] and normalize; entries below `PROPENSITY_EPS` are raised
/// to it, funded proportionally by the entries above it, so every score lies
/// in `[eps, 1 - eps]` and the row still sums to 1.
fn normalize(raw: &mut [f64]) {
    for v in raw.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    let s: f64 = raw.iter().sum();
    let k = raw.len() as f64;
    for v in raw.iter_mut() {
        *v = if s > 0.0 { *v / s } else { 1.0 / k };
    }
    let deficit: f64 = raw.iter().filter(|&&v| v < PROPENSITY_EPS).map(|v| PROPENSITY_EPS - v).sum();
    if deficit > 0.0 {
        let room: f64 = raw.iter().filter(|&&v| v >= PROPENSITY_EPS).map(|v| v - PROPENSITY_EPS).sum();
        for v in raw.iter_mut() {
            if *v < PROPENSITY_EPS {
                *v = PROPENSITY_EPS;
            } else {
                *v -= deficit * (*v - PROPENSITY_EPS) / room;
            }
        }
    }
}

impl PropensityModel {
    pub fn fit(train: &ExperimentDataset, mode: PropensityMode, learner: &BaseLearner) -> Result<Self> {
        match mode {
            PropensityMode::Empirical => Ok(Self::Empirical {
                counts: train.group_counts(),
            }),
            PropensityMode::Learned => {
                let models = (0..train.groups().len())
                    .map(|g| {
                        let target: Vec<f64> = train.assignment().iter().map(|&a| f64::from(u8::from(a == g))).collect();
                        learner.fit(
                            train.features(),
                            &target,
                            None,
                            seed::derive2(learner.seed(), tags::PROPENSITY, g as u64),
                        )
                    })
                    .collect::<Result<_>>()?;
                Ok(Self::Learned { models })
            }
        }
    }

    pub fn n_groups(&self) -> usize {
        match self {
            Self::Empirical { counts } => counts.len(),
            Self::Learned { models } => models.len(),
        }
    }

    /// Rows × groups matrix of assignment probabilities; each row sums to 1.
    pub fn scores(&self, x: &Matrix) -> Result<Matrix> {
        let k = self.n_groups();
        let mut out = Matrix::zeros(x.rows(), k);
        match self {
            Self::Empirical { counts } => {
                let mut row: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
                normalize(&mut row);
                for i in 0..x.rows() {
                    for (g, &v) in row.iter().enumerate() {
                        out.set(i, g, v);
                    }
                }
            }
            Self::Learned { models } => {
                let preds = models.iter().map(|m| m.predict(x)).collect::<Result<Vec<_>>>()?;
                let mut row = vec![0.0; k];
                for i in 0..x.rows() {
                    for g in 0..k {
                        row[g] = preds[g][i];
                    }
                    normalize(&mut row);
                    for (g, &v) in row.iter().enumerate() {
                        out.set(i, g, v);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Weight `e_arm / (e_arm + e_control)` on the control-fitted effect model.
    /// In empirical mode this is `n_arm / (n_arm + n_control)` exactly.
    pub fn pair_weights(&self, x: &Matrix, arm: usize, control: usize) -> Result<Vec<f64>> {
        match self {
            Self::Empirical { counts } => {
                let w = counts[arm] as f64 / (counts[arm] + counts[control]) as f64;
                Ok(vec![w; x.rows()])
            }
            Self::Learned { .. } => {
                let s = self.scores(x)?;
                Ok((0..x.rows())
                    .map(|i| {
                        let (ea, ec) = (s.get(i, arm), s.get(i, control));
                        ea / (ea + ec)
                    })
                    .collect())
            }
        }
    }
}
