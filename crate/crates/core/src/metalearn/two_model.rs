use rayon::prelude::*;

use super::propensity::{PropensityMode, PropensityModel};
use super::{check_cost, require_control, require_rows, Components, ModelKind, Objective, UpliftModel};
use crate::baselearn::{BaseLearner, Regressor};
use crate::dataset::{CostStructure, ExperimentDataset};
use crate::error::Result;
use crate::seed::{self, tags};

/// One outcome model per group, fit on that group's rows with seed
/// `derive2(master, OUTCOME, g)`.
pub(crate) fn fit_outcome_models(train: &ExperimentDataset, learner: &BaseLearner) -> Result<Vec<Regressor>> {
    (0..train.groups().len())
        .into_par_iter()
        .map(|g| {
            let rows = train.rows_of(g);
            let x = train.features().select_rows(&rows);
            let y: Vec<f64> = rows.iter().map(|&i| train.outcome()[i]).collect();
            learner.fit(&x, &y, None, seed::derive2(learner.seed(), tags::OUTCOME, g as u64))
        })
        .collect()
}

/// Per-arm CATE `mu_t(x) - mu_0(x)`.
pub fn fit_two_model(train: &ExperimentDataset, learner: &BaseLearner) -> Result<UpliftModel> {
    build(train, learner, None)
}

/// Plug-in net-value CATE `(v - s_t) mu_t - (v - s_0) mu_0 - (c_t - c_0)`.
pub fn fit_nv_two_model(train: &ExperimentDataset, learner: &BaseLearner, cost: &CostStructure) -> Result<UpliftModel> {
    check_cost(cost, train.groups())?;
    build(train, learner, Some(cost))
}

fn build(train: &ExperimentDataset, learner: &BaseLearner, cost: Option<&CostStructure>) -> Result<UpliftModel> {
    require_control(train)?;
    require_rows(train, learner)?;
    let outcome = fit_outcome_models(train, learner)?;
    Ok(UpliftModel {
        kind: ModelKind::TwoModel,
        objective: if cost.is_some() { Objective::NetValue } else { Objective::Conversion },
        groups: train.groups().clone(),
        arm_groups: train.groups().arms(),
        components: Components::TwoModel { outcome },
        propensity: PropensityModel::fit(train, PropensityMode::Empirical, learner)?,
        cost: cost.cloned(),
        learner: learner.clone(),
        n_features: train.n_features(),
    })
}
