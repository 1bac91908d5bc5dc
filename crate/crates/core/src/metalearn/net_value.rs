//! Pseudo-effects for the X-Learner's second stage and the net-value
//! residual used by the R-Learner.

use crate::baselearn::Regressor;
use crate::dataset::{CostStructure, ExperimentDataset};
use crate::error::{Error, Result};

/// Imputed effects for one arm, aligned to the source rows they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmPseudoEffects {
    pub arm: usize,
    pub control_rows: Vec<usize>,
    /// One value per control row.
    pub control: Vec<f64>,
    pub treated_rows: Vec<usize>,
    /// One value per arm row.
    pub treated: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoEffects {
    pub arms: Vec<ArmPseudoEffects>,
}

fn outcomes(train: &ExperimentDataset, rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&i| train.outcome()[i]).collect()
}

fn check_models(train: &ExperimentDataset, outcome_models: &[Regressor]) -> Result<usize> {
    let control = train
        .groups()
        .control()
        .ok_or_else(|| Error::Validation("pseudo-effects require a control group".into()))?;
    if outcome_models.len() != train.groups().len() {
        return Err(Error::Validation(format!(
            "{} outcome models for {} groups",
            outcome_models.len(),
            train.groups().len()
        )));
    }
    Ok(control)
}

/// Conversion pseudo-effects: `mu_t(x) - Y` on control rows and
/// `Y - mu_0(x)` on arm rows.
pub fn build_pseudo_effects(train: &ExperimentDataset, outcome_models: &[Regressor]) -> Result<PseudoEffects> {
    let control = check_models(train, outcome_models)?;
    let control_rows = train.rows_of(control);
    let xc = train.features().select_rows(&control_rows);
    let yc = outcomes(train, &control_rows);
    let arms = train
        .groups()
        .arms()
        .into_iter()
        .map(|arm| {
            let treated_rows = train.rows_of(arm);
            let xt = train.features().select_rows(&treated_rows);
            let yt = outcomes(train, &treated_rows);
            let mu_t_on_control = outcome_models[arm].predict(&xc)?;
            let mu_0_on_treated = outcome_models[control].predict(&xt)?;
            Ok(ArmPseudoEffects {
                arm,
                control: mu_t_on_control.iter().zip(&yc).map(|(m, y)| m - y).collect(),
                control_rows: control_rows.clone(),
                treated: yt.iter().zip(&mu_0_on_treated).map(|(y, m)| y - m).collect(),
                treated_rows,
            })
        })
        .collect::<Result<_>>()?;
    Ok(PseudoEffects { arms })
}

/// Net-value pseudo-effects. On arm rows:
/// `(v - s_t) Y - (v - s_0) mu_0(x) - (c_t - c_0)`; on control rows:
/// `(v - s_t) mu_t(x) - (v - s_0) Y - (c_t - c_0)`.
pub fn build_nv_pseudo_effects(
    train: &ExperimentDataset,
    outcome_models: &[Regressor],
    cost: &CostStructure,
) -> Result<PseudoEffects> {
    let control = check_models(train, outcome_models)?;
    cost.validate(train.groups().len()).map_err(|_| {
        Error::Validation(format!(
            "cost structure must have one entry per group ({})",
            train.groups().len()
        ))
    })?;
    let v = cost.conversion_value;
    let control_rows = train.rows_of(control);
    let xc = train.features().select_rows(&control_rows);
    let yc = outcomes(train, &control_rows);
    let v0 = v - cost.triggered_cost[control];
    let arms = train
        .groups()
        .arms()
        .into_iter()
        .map(|arm| {
            let vt = v - cost.triggered_cost[arm];
            let dc = cost.impression_cost[arm] - cost.impression_cost[control];
            let treated_rows = train.rows_of(arm);
            let xt = train.features().select_rows(&treated_rows);
            let yt = outcomes(train, &treated_rows);
            let mu_t_on_control = outcome_models[arm].predict(&xc)?;
            let mu_0_on_treated = outcome_models[control].predict(&xt)?;
            Ok(ArmPseudoEffects {
                arm,
                control: mu_t_on_control
                    .iter()
                    .zip(&yc)
                    .map(|(m, y)| vt * m - v0 * y - dc)
                    .collect(),
                control_rows: control_rows.clone(),
                treated: yt
                    .iter()
                    .zip(&mu_0_on_treated)
                    .map(|(y, m)| vt * y - v0 * m - dc)
                    .collect(),
                treated_rows,
            })
        })
        .collect::<Result<_>>()?;
    Ok(PseudoEffects { arms })
}

/// Net-value R-Learner residual
/// `(v - s_i) Y_i - (v - s_bar) m_hat_i - (c_i - c_bar)`.
pub fn nv_r_residual(v: f64, s_i: f64, c_i: f64, s_bar: f64, c_bar: f64, y: f64, m_hat: f64) -> f64 {
    (v - s_i) * y - (v - s_bar) * m_hat - (c_i - c_bar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselearn::MeanModel;
    use crate::dataset::GroupTable;
    use crate::matrix::Matrix;

    fn tiny() -> ExperimentDataset {
        let x = [0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0];
        let y = [0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        ExperimentDataset::new(
            Matrix::column_vector(&x),
            vec!["x".into()],
            y.to_vec(),
            vec![0, 0, 0, 0, 1, 1, 1, 1],
            GroupTable::new(&["control", "t1"], Some("control")).unwrap(),
        )
        .unwrap()
    }

    fn constant(v: f64) -> Regressor {
        Regressor::Mean(MeanModel { value: v, n_features: 1 })
    }

    #[test]
    fn nv_pseudo_effect_hand_value() {
        let ds = tiny();
        let cost = CostStructure::new(1.0, vec![0.0, 0.01], vec![0.0, 0.2]).unwrap();
        let pe = build_nv_pseudo_effects(&ds, &[constant(0.5), constant(0.5)], &cost).unwrap();
        // converted arm row, mu_0 = 0.5: 0.8 * 1 - 1 * 0.5 - 0.01
        assert!((pe.arms[0].treated[0] - 0.29).abs() < 1e-12);
    }

    #[test]
    fn zero_cost_matches_conversion_pseudo_effects() {
        let ds = tiny();
        let models = [constant(0.25), constant(0.5)];
        let a = build_pseudo_effects(&ds, &models).unwrap();
        let b = build_nv_pseudo_effects(&ds, &models, &CostStructure::free(1.0, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn linear_in_joint_cost_scaling() {
        let ds = tiny();
        let models = [constant(0.25), constant(0.5)];
        let cost = CostStructure::new(1.0, vec![0.0, 0.03], vec![0.0, 0.3]).unwrap();
        let a = build_nv_pseudo_effects(&ds, &models, &cost).unwrap();
        let b = build_nv_pseudo_effects(&ds, &models, &cost.scaled(2.5)).unwrap();
        for (p, q) in a.arms[0].treated.iter().chain(&a.arms[0].control).zip(b.arms[0].treated.iter().chain(&b.arms[0].control)) {
            assert!((2.5 * p - q).abs() < 1e-12);
        }
        // v = 0, zero costs: every pseudo-effect vanishes
        let z = build_nv_pseudo_effects(&ds, &models, &CostStructure::free(0.0, 2)).unwrap();
        assert!(z.arms[0].treated.iter().chain(&z.arms[0].control).all(|&d| d == 0.0));
    }

    #[test]
    fn missing_cost_entry() {
        let ds = tiny();
        let cost = CostStructure {
            conversion_value: 1.0,
            impression_cost: vec![0.0],
            triggered_cost: vec![0.0],
        };
        assert!(build_nv_pseudo_effects(&ds, &[constant(0.0), constant(0.0)], &cost).is_err());
    }

    #[test]
    fn residual_hand_value() {
        // s = (0, 0.2) and c = (0, 0.01) over two control and two arm rows
        let r = nv_r_residual(1.0, 0.2, 0.01, 0.1, 0.005, 1.0, 0.5);
        assert!((r - 0.345).abs() < 1e-12);
    }
}
