//! Multi-arm X-Learner.
//!
//! Stage 1 fits an outcome model per group. Stage 2 imputes pseudo-effects on
//! control and arm rows. Stage 3 regresses them, and predictions blend the two
//! effect models with weights `e_t / (e_t + e_0)` and `e_0 / (e_t + e_0)`.

use rayon::prelude::*;

use super::net_value::{build_nv_pseudo_effects, build_pseudo_effects, ArmPseudoEffects, PseudoEffects};
use super::propensity::{PropensityMode, PropensityModel};
use super::two_model::fit_outcome_models;
use super::{check_cost, require_control, require_rows, Components, ModelKind, Objective, UpliftModel};
use crate::baselearn::{BaseLearner, Regressor};
use crate::dataset::{CostStructure, ExperimentDataset};
use crate::error::Result;
use crate::seed::{self, tags};

pub fn fit_x_learner(train: &ExperimentDataset, learner: &BaseLearner, propensity: PropensityMode) -> Result<UpliftModel> {
    build(train, learner, propensity, None)
}

/// X-Learner on net-value pseudo-effects; everything else is unchanged.
pub fn fit_nv_x_learner(
    train: &ExperimentDataset,
    learner: &BaseLearner,
    propensity: PropensityMode,
    cost: &CostStructure,
) -> Result<UpliftModel> {
    check_cost(cost, train.groups())?;
    build(train, learner, propensity, Some(cost))
}

fn build(
    train: &ExperimentDataset,
    learner: &BaseLearner,
    propensity: PropensityMode,
    cost: Option<&CostStructure>,
) -> Result<UpliftModel> {
    require_control(train)?;
    require_rows(train, learner)?;
    let outcome = fit_outcome_models(train, learner)?;
    let pseudo = match cost {
        Some(c) => build_nv_pseudo_effects(train, &outcome, c)?,
        None => build_pseudo_effects(train, &outcome)?,
    };
    let (control_effect, treated_effect) = fit_effect_models(train, learner, &pseudo)?;
    Ok(UpliftModel {
        kind: ModelKind::XLearner,
        objective: if cost.is_some() { Objective::NetValue } else { Objective::Conversion },
        groups: train.groups().clone(),
        arm_groups: train.groups().arms(),
        components: Components::XLearner {
            outcome,
            control_effect,
            treated_effect,
        },
        propensity: PropensityModel::fit(train, propensity, learner)?,
        cost: cost.cloned(),
        learner: learner.clone(),
        n_features: train.n_features(),
    })
}

pub(crate) fn fit_effect_pair(
    train: &ExperimentDataset,
    learner: &BaseLearner,
    pe: &ArmPseudoEffects,
) -> Result<(Regressor, Regressor)> {
    let master = learner.seed();
    let arm = pe.arm as u64;
    let xc = train.features().select_rows(&pe.control_rows);
    let xt = train.features().select_rows(&pe.treated_rows);
    let tau0 = learner.fit(&xc, &pe.control, None, seed::derive2(master, tags::CONTROL_EFFECT, arm))?;
    let tau1 = learner.fit(&xt, &pe.treated, None, seed::derive2(master, tags::TREATED_EFFECT, arm))?;
    Ok((tau0, tau1))
}

fn fit_effect_models(
    train: &ExperimentDataset,
    learner: &BaseLearner,
    pseudo: &PseudoEffects,
) -> Result<(Vec<Regressor>, Vec<Regressor>)> {
    let pairs: Vec<(Regressor, Regressor)> = pseudo
        .arms
        .par_iter()
        .map(|pe| fit_effect_pair(train, learner, pe))
        .collect::<Result<_>>()?;
    Ok(pairs.into_iter().unzip())
}
