//! Policy evaluation: uplift curves, AUUC, majority voting and policy reports.

mod curve;
mod policy;

pub use curve::{
    auuc, uplift_curve_multi_arm, uplift_curve_multi_arm_scaled, uplift_curve_two_arm, uplift_curve_two_arm_scaled,
    CurvePoint, CurveScaling, UpliftCurve, DEFAULT_BINS,
};
pub use policy::{evaluate_policy, majority_vote_recommend, mean_se, realized_values, single_arm_values, PolicyReport};
