//! Multi-arm R-Learner.
//!
//! For each arm, restrict to control and arm rows, compute out-of-fold mean
//! outcome `m_hat` and propensity `e_hat`, then minimize
//! `sum((r_i - (W_i - e_hat_i) tau(X_i))^2)` where `r_i` is the residual.
//! For squared loss this equals a regression of `r_i / (W_i - e_hat_i)`
//! weighted by `(W_i - e_hat_i)^2`, which is how the final stage is fit.

use rayon::prelude::*;

use super::net_value::nv_r_residual;
use super::propensity::{PropensityMode, PropensityModel, PROPENSITY_EPS};
use super::{check_cost, require_control, require_rows, Components, ModelKind, Objective, UpliftModel};
use crate::baselearn::{crossfit_predict, BaseLearner, CrossFitPlan, Regressor};
use crate::dataset::{CostStructure, ExperimentDataset};
use crate::error::{Error, Result};
use crate::seed::{self, tags};

/// Intermediate quantities of one arm's fit, aligned to `rows`.
#[derive(Debug, Clone, PartialEq)]
pub struct RArmTrace {
    pub arm: usize,
    /// Control and arm row indices into the training set, ascending.
    pub rows: Vec<usize>,
    /// 1 for arm rows, 0 for control rows.
    pub treated: Vec<f64>,
    pub outcome: Vec<f64>,
    pub m_hat: Vec<f64>,
    pub e_hat: Vec<f64>,
    pub residual: Vec<f64>,
    pub target: Vec<f64>,
    pub weight: Vec<f64>,
}

pub fn fit_r_learner(
    train: &ExperimentDataset,
    learner: &BaseLearner,
    propensity: PropensityMode,
    plan: &CrossFitPlan,
) -> Result<UpliftModel> {
    fit_r_learner_traced(train, learner, propensity, plan).map(|(m, _)| m)
}

pub fn fit_r_learner_traced(
    train: &ExperimentDataset,
    learner: &BaseLearner,
    propensity: PropensityMode,
    plan: &CrossFitPlan,
) -> Result<(UpliftModel, Vec<RArmTrace>)> {
    build(train, learner, propensity, plan, None)
}

/// R-Learner whose residual is the net value
/// `(v - s_i) Y_i - (v - s_bar) m_hat_i - (c_i - c_bar)`, with `s_bar`, `c_bar`
/// averaged over each arm's control-plus-arm subset.
pub fn fit_nv_r_learner(
    train: &ExperimentDataset,
    learner: &BaseLearner,
    propensity: PropensityMode,
    plan: &CrossFitPlan,
    cost: &CostStructure,
) -> Result<UpliftModel> {
    fit_nv_r_learner_traced(train, learner, propensity, plan, cost).map(|(m, _)| m)
}

pub fn fit_nv_r_learner_traced(
    train: &ExperimentDataset,
    learner: &BaseLearner,
    propensity: PropensityMode,
    plan: &CrossFitPlan,
    cost: &CostStructure,
) -> Result<(UpliftModel, Vec<RArmTrace>)> {
    check_cost(cost, train.groups())?;
    build(train, learner, propensity, plan, Some(cost))
}

fn build(
    train: &ExperimentDataset,
    learner: &BaseLearner,
    propensity: PropensityMode,
    plan: &CrossFitPlan,
    cost: Option<&CostStructure>,
) -> Result<(UpliftModel, Vec<RArmTrace>)> {
    let control = require_control(train)?;
    let counts = require_rows(train, learner)?;
    if plan.len() != train.len() {
        return Err(Error::Validation(format!(
            "cross-fit plan covers {} rows, training set has {}",
            plan.len(),
            train.len()
        )));
    }
    let arms = train.groups().arms();
    let fitted: Vec<(Regressor, RArmTrace)> = arms
        .par_iter()
        .map(|&arm| fit_arm(train, learner, propensity, plan, cost, control, arm, &counts))
        .collect::<Result<_>>()?;
    let (effect, traces): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();
    let model = UpliftModel {
        kind: ModelKind::RLearner,
        objective: if cost.is_some() { Objective::NetValue } else { Objective::Conversion },
        groups: train.groups().clone(),
        arm_groups: arms,
        components: Components::RLearner { effect },
        propensity: PropensityModel::Empirical { counts },
        cost: cost.cloned(),
        learner: learner.clone(),
        n_features: train.n_features(),
    };
    Ok((model, traces))
}

#[allow(clippy::too_many_arguments)]
fn fit_arm(
    train: &ExperimentDataset,
    learner: &BaseLearner,
    propensity: PropensityMode,
    plan: &CrossFitPlan,
    cost: Option<&CostStructure>,
    control: usize,
    arm: usize,
    counts: &[usize],
) -> Result<(Regressor, RArmTrace)> {
    let rows: Vec<usize> = (0..train.len())
        .filter(|&i| {
            let g = train.assignment()[i];
            g == control || g == arm
        })
        .collect();
    let x = train.features().select_rows(&rows);
    let outcome: Vec<f64> = rows.iter().map(|&i| train.outcome()[i]).collect();
    let treated: Vec<f64> = rows
        .iter()
        .map(|&i| f64::from(u8::from(train.assignment()[i] == arm)))
        .collect();
    let sub_plan = plan.restrict(&rows)?;

    let m_hat = crossfit_predict(
        &x,
        &outcome,
        None,
        learner,
        &sub_plan.clone().with_seed(seed::derive2(plan.seed(), tags::MEAN_OUTCOME, arm as u64)),
    )?;
    let e_hat: Vec<f64> = match propensity {
        PropensityMode::Empirical => {
            let e = counts[arm] as f64 / (counts[arm] + counts[control]) as f64;
            vec![e.clamp(PROPENSITY_EPS, 1.0 - PROPENSITY_EPS); rows.len()]
        }
        PropensityMode::Learned => crossfit_predict(
            &x,
            &treated,
            None,
            learner,
            &sub_plan.with_seed(seed::derive2(plan.seed(), tags::PROPENSITY, arm as u64)),
        )?
        .into_iter()
        .map(|e| e.clamp(PROPENSITY_EPS, 1.0 - PROPENSITY_EPS))
        .collect(),
    };

    let residual: Vec<f64> = match cost {
        None => outcome.iter().zip(&m_hat).map(|(y, m)| y - m).collect(),
        Some(c) => {
            let groups: Vec<usize> = rows.iter().map(|&i| train.assignment()[i]).collect();
            let k = rows.len() as f64;
            let s_bar = groups.iter().map(|&g| c.triggered_cost[g]).sum::<f64>() / k;
            let c_bar = groups.iter().map(|&g| c.impression_cost[g]).sum::<f64>() / k;
            (0..rows.len())
                .map(|i| {
                    let g = groups[i];
                    nv_r_residual(
                        c.conversion_value,
                        c.triggered_cost[g],
                        c.impression_cost[g],
                        s_bar,
                        c_bar,
                        outcome[i],
                        m_hat[i],
                    )
                })
                .collect()
        }
    };

    let mut target = Vec::with_capacity(rows.len());
    let mut weight = Vec::with_capacity(rows.len());
    for i in 0..rows.len() {
        let d = treated[i] - e_hat[i];
        if d.abs() < PROPENSITY_EPS {
            return Err(Error::DegeneratePropensity(format!(
                "training row {}: |W - e_hat| = {} below {PROPENSITY_EPS}",
                rows[i],
                d.abs()
            )));
        }
        target.push(residual[i] / d);
        weight.push(d * d);
    }

    let effect = learner.fit(
        &x,
        &target,
        Some(&weight),
        seed::derive2(learner.seed(), tags::FINAL_STAGE, arm as u64),
    )?;
    Ok((
        effect,
        RArmTrace {
            arm,
            rows,
            treated,
            outcome,
            m_hat,
            e_hat,
            residual,
            target,
            weight,
        },
    ))
}
