//! Meta-learners for multi-arm CATE and net-value CATE estimation.
//!
//! Every estimator compares each treatment arm against the control. Column
//! `j` of [`UpliftModel::predict_cate`] is the effect of the `j`-th
//! non-control group; [`UpliftModel::arm_groups`] maps columns back to group
//! indices.
//!
//! The net-value objective scores arm `t` against control `0` as
//! `(v - s_t) Y_t - (v - s_0) Y_0 - (c_t - c_0)`, where `v` is the conversion
//! value, `s` the triggered cost and `c` the impression cost.

mod binary;
mod net_value;
mod pairwise;
mod propensity;
mod r_learner;
mod two_model;
mod x_learner;

use serde::{Deserialize, Serialize};

use crate::baselearn::{BaseLearner, CrossFitPlan, Regressor};
use crate::dataset::{CostStructure, ExperimentDataset, GroupTable};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use binary::{fit_binary_x_learner, BinaryXLearner};
pub use net_value::{build_nv_pseudo_effects, build_pseudo_effects, nv_r_residual, ArmPseudoEffects, PseudoEffects};
pub use pairwise::{fit_pairwise, PairwiseCates, PairwiseModel};
pub use propensity::{PropensityMode, PropensityModel, PROPENSITY_EPS};
pub use r_learner::{fit_nv_r_learner, fit_nv_r_learner_traced, fit_r_learner, fit_r_learner_traced, RArmTrace};
pub use two_model::{fit_nv_two_model, fit_two_model};
pub use x_learner::{fit_nv_x_learner, fit_x_learner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    TwoModel,
    XLearner,
    RLearner,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::TwoModel, ModelKind::XLearner, ModelKind::RLearner];

    pub fn name(self) -> &'static str {
        match self {
            Self::TwoModel => "two_model",
            Self::XLearner => "x_learner",
            Self::RLearner => "r_learner",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_model" => Ok(Self::TwoModel),
            "x_learner" => Ok(Self::XLearner),
            "r_learner" => Ok(Self::RLearner),
            other => Err(Error::Param(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Conversion,
    NetValue,
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conversion" => Ok(Self::Conversion),
            "net_value" => Ok(Self::NetValue),
            other => Err(Error::Param(format!("unknown objective `{other}`"))),
        }
    }
}

/// Fitted components, per kind. Per-arm vectors follow `arm_groups` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Components {
    TwoModel {
        /// One outcome model per group, indexed by group.
        outcome: Vec<Regressor>,
    },
    XLearner {
        outcome: Vec<Regressor>,
        /// Fitted on control-row pseudo-effects, one per arm.
        control_effect: Vec<Regressor>,
        /// Fitted on arm-row pseudo-effects, one per arm.
        treated_effect: Vec<Regressor>,
    },
    RLearner {
        /// Final-stage weighted regressions, one per arm.
        effect: Vec<Regressor>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpliftModel {
    pub kind: ModelKind,
    pub objective: Objective,
    pub groups: GroupTable,
    pub arm_groups: Vec<usize>,
    pub components: Components,
    pub propensity: PropensityModel,
    pub cost: Option<CostStructure>,
    pub learner: BaseLearner,
    pub n_features: usize,
}

impl UpliftModel {
    pub fn control(&self) -> usize {
        self.groups.control().expect("uplift models always have a control")
    }

    /// CATE matrix, one column per arm.
    pub fn predict_cate(&self, x: &Matrix) -> Result<Matrix> {
        x.ensure_cols(self.n_features)?;
        let n = x.rows();
        let columns: Vec<Vec<f64>> = match &self.components {
            Components::TwoModel { outcome } => {
                let control = outcome[self.control()].predict(x)?;
                self.arm_groups
                    .iter()
                    .map(|&g| {
                        let treated = outcome[g].predict(x)?;
                        Ok(match (&self.objective, &self.cost) {
                            (Objective::NetValue, Some(c)) => {
                                let (vt, v0) = (c.conversion_value - c.triggered_cost[g], c.conversion_value - c.triggered_cost[0]);
                                let dc = c.impression_cost[g] - c.impression_cost[0];
                                treated.iter().zip(&control).map(|(t, c0)| vt * t - v0 * c0 - dc).collect()
                            }
                            _ => treated.iter().zip(&control).map(|(t, c0)| t - c0).collect(),
                        })
                    })
                    .collect::<Result<_>>()?
            }
            Components::XLearner {
                control_effect,
                treated_effect,
                ..
            } => self
                .arm_groups
                .iter()
                .enumerate()
                .map(|(a, &g)| {
                    let tau0 = control_effect[a].predict(x)?;
                    let tau1 = treated_effect[a].predict(x)?;
                    let w = self.propensity.pair_weights(x, g, self.control())?;
                    Ok((0..n).map(|i| w[i] * tau0[i] + (1.0 - w[i]) * tau1[i]).collect())
                })
                .collect::<Result<_>>()?,
            Components::RLearner { effect } => effect.iter().map(|m| m.predict(x)).collect::<Result<_>>()?,
        };
        let mut out = Matrix::zeros(n, self.arm_groups.len());
        for (j, col) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                out.set(i, j, v);
            }
        }
        Ok(out)
    }

    pub fn recommend(&self, x: &Matrix, include_control: bool) -> Result<Vec<usize>> {
        let cate = self.predict_cate(x)?;
        Ok(recommend_from_cate(&cate, &self.arm_groups, Some(self.control()), include_control))
    }
}

/// Per-row argmax over arm columns, ties to the lowest group index. With
/// `include_control`, control wins iff every arm score is negative.
pub fn recommend_from_cate(cate: &Matrix, arm_groups: &[usize], control: Option<usize>, include_control: bool) -> Vec<usize> {
    (0..cate.rows())
        .map(|i| {
            let (best_col, best) = best_arm(cate.row(i));
            match control {
                Some(c) if include_control && best < 0.0 => c,
                _ => arm_groups[best_col],
            }
        })
        .collect()
}

/// First column holding the row maximum, and that maximum.
pub fn best_arm(row: &[f64]) -> (usize, f64) {
    let mut best = (0, row[0]);
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (j, v);
        }
    }
    best
}

/// Everything needed to fit any supported model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub objective: Objective,
    pub learner: BaseLearner,
    pub propensity: PropensityMode,
    pub k_folds: usize,
    pub cost: Option<CostStructure>,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, learner: BaseLearner) -> Self {
        Self {
            kind,
            objective: Objective::Conversion,
            learner,
            propensity: PropensityMode::Empirical,
            k_folds: 5,
            cost: None,
        }
    }

    pub fn net_value(mut self, cost: CostStructure) -> Self {
        self.objective = Objective::NetValue;
        self.cost = Some(cost);
        self
    }

    pub fn fit(&self, train: &ExperimentDataset) -> Result<UpliftModel> {
        let cost = match self.objective {
            Objective::Conversion => None,
            Objective::NetValue => Some(
                self.cost
                    .as_ref()
                    .ok_or_else(|| Error::Param("net_value objective requires a cost structure".into()))?,
            ),
        };
        let plan = || CrossFitPlan::new(train.len(), self.k_folds, self.learner.seed());
        match (self.kind, cost) {
            (ModelKind::TwoModel, None) => fit_two_model(train, &self.learner),
            (ModelKind::TwoModel, Some(c)) => fit_nv_two_model(train, &self.learner, c),
            (ModelKind::XLearner, None) => fit_x_learner(train, &self.learner, self.propensity),
            (ModelKind::XLearner, Some(c)) => fit_nv_x_learner(train, &self.learner, self.propensity, c),
            (ModelKind::RLearner, None) => fit_r_learner(train, &self.learner, self.propensity, &plan()?),
            (ModelKind::RLearner, Some(c)) => fit_nv_r_learner(train, &self.learner, self.propensity, &plan()?, c),
        }
    }
}

pub(crate) fn require_control(train: &ExperimentDataset) -> Result<usize> {
    train
        .groups()
        .control()
        .ok_or_else(|| Error::Validation("model requires a control group".into()))
}

pub(crate) fn require_rows(train: &ExperimentDataset, learner: &BaseLearner) -> Result<Vec<usize>> {
    let counts = train.group_counts();
    for (g, &c) in counts.iter().enumerate() {
        if c < learner.min_rows() {
            return Err(Error::Insufficient(format!(
                "group `{}` has {c} rows, the base learner needs {}",
                train.groups().label(g),
                learner.min_rows()
            )));
        }
    }
    Ok(counts)
}

pub(crate) fn check_cost(cost: &CostStructure, groups: &GroupTable) -> Result<()> {
    cost.validate(groups.len())
}
