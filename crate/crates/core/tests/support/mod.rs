//! Strategies and property checks shared by the property suite and the
//! acceptance run.

#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use uplift::baselearn::{crossfit_predict, fit_forest, fit_tree, tree_rng, BaseLearner, CrossFitPlan, ForestParams};
use uplift::datagen::{generate, GenSpec, GroupLift};
use uplift::dataset::{group_proportions, stratified_split, CostStructure, ExperimentDataset, GroupTable, SplitSpec};
use uplift::eval::{evaluate_policy, uplift_curve_multi_arm, uplift_curve_two_arm};
use uplift::metalearn::{recommend_from_cate, ModelKind, ModelSpec, PropensityMode, PropensityModel, UpliftModel};
use uplift::Matrix;

pub type PropResult = Result<(), TestCaseError>;

/// Raw material for a small experiment: `(x, y, group)` per row.
#[derive(Debug, Clone)]
pub struct RawRows {
    pub n_groups: usize,
    pub n_features: usize,
    pub rows: Vec<(Vec<f64>, f64, usize)>,
}

impl RawRows {
    /// Dataset with labels `control, t1, t2, ...`.
    pub fn dataset(&self) -> ExperimentDataset {
        let labels: Vec<String> = (0..self.n_groups)
            .map(|g| if g == 0 { "control".to_string() } else { format!("t{g}") })
            .collect();
        let table = GroupTable::new(&labels, Some("control")).unwrap();
        let x = Matrix::from_rows(&self.rows.iter().map(|r| r.0.clone()).collect::<Vec<_>>()).unwrap();
        let names = (0..self.n_features).map(|j| format!("x{j}")).collect();
        ExperimentDataset::new(
            x,
            names,
            self.rows.iter().map(|r| r.1).collect(),
            self.rows.iter().map(|r| r.2).collect(),
            table,
        )
        .unwrap()
    }
}

/// Every group appears at least `min_per_group` times; features use a coarse
/// grid so that ties occur.
pub fn raw_rows(n_groups: usize, n_features: usize, min_per_group: usize, max_extra: usize) -> impl Strategy<Value = RawRows> {
    let row = (
        proptest::collection::vec((-4i32..=4).prop_map(|v| f64::from(v) * 0.5), n_features),
        proptest::bool::ANY,
    );
    let base = proptest::collection::vec(row.clone(), n_groups * min_per_group);
    let extra = proptest::collection::vec((row, 0..n_groups), 0..=max_extra);
    (base, extra).prop_map(move |(base, extra)| {
        let mut rows: Vec<(Vec<f64>, f64, usize)> = base
            .into_iter()
            .enumerate()
            .map(|(i, (x, y))| (x, f64::from(u8::from(y)), i % n_groups))
            .collect();
        rows.extend(extra.into_iter().map(|((x, y), g)| (x, f64::from(u8::from(y)), g)));
        RawRows {
            n_groups,
            n_features,
            rows,
        }
    })
}

pub fn small_forest(seed: u64) -> BaseLearner {
    BaseLearner::Forest(ForestParams {
        n_trees: 5,
        max_features: 2,
        max_depth: 4,
        min_samples_leaf: 2,
        seed,
        bootstrap: true,
    })
}

/// Scores on a coarse grid (ties) plus a strictly increasing transform.
pub fn scores_and_transform(n: usize) -> impl Strategy<Value = (Vec<f64>, f64, f64, f64)> {
    (
        proptest::collection::vec((-6i32..=6).prop_map(|v| f64::from(v) / 3.0), n),
        0.1f64..3.0,
        -2.0f64..2.0,
        0.0f64..1.0,
    )
}

fn transform(s: f64, a: f64, b: f64, c: f64) -> f64 {
    // strictly increasing in s for a > 0, c >= 0
    a * s + b + c * s * s * s
}

pub fn auuc_monotone_invariance(raw: &RawRows, scores: &[f64], a: f64, b: f64, c: f64) -> PropResult {
    let ds = raw.dataset();
    let t: Vec<f64> = scores.iter().map(|&s| transform(s, a, b, c)).collect();
    let c1 = uplift_curve_two_arm(scores, &ds, 10).unwrap();
    let c2 = uplift_curve_two_arm(&t, &ds, 10).unwrap();
    prop_assert_eq!(&c1, &c2);
    Ok(())
}

pub fn multi_arm_monotone_invariance(raw: &RawRows, scores: &[f64], a: f64, b: f64, c: f64) -> PropResult {
    let ds = raw.dataset();
    let arms = ds.groups().arms();
    let n = ds.len();
    let cols = arms.len();
    let cate = Matrix::new(n, cols, scores[..n * cols].to_vec()).unwrap();
    let tcate = Matrix::new(n, cols, cate.as_slice().iter().map(|&s| transform(s, a, b, c)).collect()).unwrap();
    let r1 = recommend_from_cate(&cate, &arms, Some(0), false);
    let r2 = recommend_from_cate(&tcate, &arms, Some(0), false);
    prop_assert_eq!(&r1, &r2);
    let c1 = uplift_curve_multi_arm(&cate, &r1, &ds, 10).unwrap();
    let c2 = uplift_curve_multi_arm(&tcate, &r2, &ds, 10).unwrap();
    prop_assert_eq!(c1, c2);
    Ok(())
}

/// The curve is a function of (score, role, outcome) multisets only.
pub fn curve_row_permutation_invariance(raw: &RawRows, scores: &[f64], perm_seed: u64) -> PropResult {
    use rand::seq::SliceRandom;
    let ds = raw.dataset();
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut uplift::seed::rng(perm_seed));
    let permuted = ds.subset(&order);
    let ps: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
    let c1 = uplift_curve_two_arm(scores, &ds, 7).unwrap();
    let c2 = uplift_curve_two_arm(&ps, &permuted, 7).unwrap();
    prop_assert_eq!(c1.points.len(), c2.points.len());
    for (p, q) in c1.points.iter().zip(&c2.points) {
        prop_assert!((p.u - q.u).abs() < 1e-12, "{} vs {}", p.u, q.u);
        prop_assert_eq!(p.flagged, q.flagged);
    }
    Ok(())
}

pub fn curve_endpoint_is_ate(raw: &RawRows, scores: &[f64]) -> PropResult {
    let ds = raw.dataset();
    let curve = uplift_curve_two_arm(scores, &ds, 13).unwrap();
    let mean = |g: usize| {
        let r = ds.rows_of(g);
        r.iter().map(|&i| ds.outcome()[i]).sum::<f64>() / r.len() as f64
    };
    let ate = mean(1) - mean(0);
    prop_assert!((curve.endpoint() - ate).abs() < 1e-12);
    Ok(())
}

pub fn propensity_weights_sum_to_one(raw: &RawRows, seed: u64) -> PropResult {
    let ds = raw.dataset();
    for (mode, tol) in [(PropensityMode::Empirical, 1e-12), (PropensityMode::Learned, 1e-6)] {
        let model = PropensityModel::fit(&ds, mode, &small_forest(seed)).unwrap();
        let scores = model.scores(ds.features()).unwrap();
        for i in 0..scores.rows() {
            let row = scores.row(i);
            let s: f64 = row.iter().sum();
            prop_assert!((s - 1.0).abs() < tol, "{mode:?} row {i} sums to {s}");
            prop_assert!(row.iter().all(|&p| (1e-6 - 1e-15..=1.0 - 1e-6 + 1e-15).contains(&p)));
        }
        for arm in ds.groups().arms() {
            let w = model.pair_weights(ds.features(), arm, 0).unwrap();
            prop_assert!(w.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
    Ok(())
}

pub fn generator_determinism_and_clipping(n: usize, lift: f64, neg: f64, seed: u64) -> PropResult {
    let spec = GenSpec {
        n_per_group: n,
        groups: vec![
            GroupLift::new("control", 0.0, neg / 2.0),
            GroupLift::new("t1", lift, neg),
            GroupLift::new("t2", neg, lift),
        ],
        seed,
        ..GenSpec::default()
    };
    let a = generate(&spec).unwrap();
    let b = generate(&spec).unwrap();
    prop_assert_eq!(&a, &b);
    let ds = &a.dataset;
    for i in 0..ds.len() {
        let y = ds.outcome()[i];
        match a.lift[i] {
            1 => prop_assert_eq!(y, 1.0),
            -1 => prop_assert_eq!(y, 0.0),
            _ => prop_assert_eq!(y, a.base_outcome[i]),
        }
        prop_assert_eq!(y, (a.base_outcome[i] + f64::from(a.lift[i])).clamp(0.0, 1.0));
    }
    for g in &spec.groups {
        let gi = ds.groups().index_of(&g.label).unwrap();
        let rows = ds.rows_of(gi);
        let pos = rows.iter().filter(|&&i| a.lift[i] == 1).count();
        let neg_count = rows.iter().filter(|&&i| a.lift[i] == -1).count();
        let n_top = (g.lift * n as f64).ceil() as usize;
        prop_assert_eq!(pos, n_top);
        prop_assert_eq!(neg_count, ((g.neg_lift * n as f64).ceil() as usize).min(n - n_top));
    }
    Ok(())
}

/// Flipping the targets of fold `f` leaves the out-of-fold predictions of
/// fold `f` rows unchanged.
pub fn crossfit_no_leakage(raw: &RawRows, k: usize, fold: usize, seed: u64) -> PropResult {
    let ds = raw.dataset();
    let plan = CrossFitPlan::new(ds.len(), k, seed).unwrap();
    let f = fold % k;
    let y = ds.outcome().to_vec();
    let flipped: Vec<f64> = y
        .iter()
        .zip(plan.folds())
        .map(|(&v, &fo)| if fo == f { 1.0 - v } else { v })
        .collect();
    for learner in [BaseLearner::Mean, small_forest(seed)] {
        let a = crossfit_predict(ds.features(), &y, None, &learner, &plan).unwrap();
        let b = crossfit_predict(ds.features(), &flipped, None, &learner, &plan).unwrap();
        for i in 0..ds.len() {
            if plan.folds()[i] == f {
                prop_assert_eq!(a[i], b[i], "row {} of fold {} leaked", i, f);
            }
        }
    }
    Ok(())
}

/// Serializing a fitted model and reading it back predicts bit-identically.
pub fn model_round_trip(raw: &RawRows, kind_index: usize, seed: u64) -> PropResult {
    let ds = raw.dataset();
    let kind = ModelKind::ALL[kind_index % 3];
    let mut spec = ModelSpec::new(kind, small_forest(seed));
    spec.k_folds = 2;
    let model = spec.fit(&ds).unwrap();
    let json = serde_json::to_string(&model).unwrap();
    let back: UpliftModel = serde_json::from_str(&json).unwrap();
    prop_assert_eq!(&back, &model);
    prop_assert_eq!(back.predict_cate(ds.features()).unwrap(), model.predict_cate(ds.features()).unwrap());
    Ok(())
}

/// Scaling value and costs jointly by `k` scales net-value CATEs by `k` and
/// keeps recommendations.
pub fn argmax_scaling_invariance(raw: &RawRows, v: f64, costs: &[(f64, f64)], k: f64) -> PropResult {
    let ds = raw.dataset();
    let g = ds.groups().len();
    let mut impression = vec![0.0];
    let mut triggered = vec![0.0];
    for &(c, s) in costs.iter().take(g - 1) {
        impression.push(c);
        triggered.push(s);
    }
    let cost = CostStructure::new(v, impression, triggered).unwrap();
    for kind in ModelKind::ALL {
        let mut spec = ModelSpec::new(kind, BaseLearner::Mean).net_value(cost.clone());
        spec.k_folds = 2;
        let base = spec.fit(&ds).unwrap();
        let scaled = ModelSpec {
            cost: Some(cost.scaled(k)),
            ..spec.clone()
        }
        .fit(&ds)
        .unwrap();
        let c1 = base.predict_cate(ds.features()).unwrap();
        let c2 = scaled.predict_cate(ds.features()).unwrap();
        for (a, b) in c1.as_slice().iter().zip(c2.as_slice()) {
            prop_assert_eq!(a * k, *b, "{:?}", kind);
        }
        for include_control in [false, true] {
            prop_assert_eq!(
                base.recommend(ds.features(), include_control).unwrap(),
                scaled.recommend(ds.features(), include_control).unwrap()
            );
        }
    }
    Ok(())
}

pub fn forest_tree_order_invariance(raw: &RawRows, seed: u64, perm_seed: u64) -> PropResult {
    use rand::seq::SliceRandom;
    let ds = raw.dataset();
    let forest = fit_forest(ds.features(), ds.outcome(), None, &forest_params(seed, 7, 2)).unwrap();
    let mut order: Vec<usize> = (0..forest.trees().len()).collect();
    order.shuffle(&mut uplift::seed::rng(perm_seed));
    let a = forest.predict(ds.features()).unwrap();
    let b = forest.with_tree_order(&order).predict(ds.features()).unwrap();
    for (x, y) in a.iter().zip(&b) {
        prop_assert!((x - y).abs() < 1e-12);
    }
    Ok(())
}

fn forest_params(seed: u64, n_trees: usize, leaf: usize) -> ForestParams {
    ForestParams {
        n_trees,
        max_features: 2,
        max_depth: 6,
        min_samples_leaf: leaf,
        seed,
        bootstrap: true,
    }
}

pub fn constant_weight_equivalence(raw: &RawRows, seed: u64, k: f64) -> PropResult {
    let ds = raw.dataset();
    let p = forest_params(seed, 3, 2);
    let w = vec![k; ds.len()];
    let a = fit_forest(ds.features(), ds.outcome(), None, &p).unwrap();
    let b = fit_forest(ds.features(), ds.outcome(), Some(&w), &p).unwrap();
    prop_assert_eq!(a.trees(), b.trees());
    Ok(())
}

pub fn min_leaf_monotone(raw: &RawRows, seed: u64, leaf: usize) -> PropResult {
    let ds = raw.dataset();
    let p = |l| ForestParams {
        n_trees: 1,
        max_features: ds.n_features(),
        max_depth: 8,
        min_samples_leaf: l,
        seed,
        bootstrap: false,
    };
    let a = fit_tree(ds.features(), ds.outcome(), None, &p(leaf), &mut tree_rng(seed, 0)).unwrap();
    let b = fit_tree(ds.features(), ds.outcome(), None, &p(leaf + 1), &mut tree_rng(seed, 0)).unwrap();
    prop_assert!(b.n_leaves() <= a.n_leaves(), "leaf {}: {} -> {}", leaf, a.n_leaves(), b.n_leaves());
    Ok(())
}

pub fn split_concat_multiset(raw: &RawRows, fraction: f64, seed: u64) -> PropResult {
    let ds = raw.dataset();
    let (train, test) = stratified_split(&ds, SplitSpec { test_fraction: fraction, seed }).unwrap();
    let key = |d: &ExperimentDataset| {
        let mut v: Vec<String> = (0..d.len())
            .map(|i| format!("{:?}|{}|{}", d.features().row(i), d.outcome()[i], d.assignment()[i]))
            .collect();
        v.sort();
        v
    };
    for joined in [
        ExperimentDataset::concat(&[&train, &test]).unwrap(),
        ExperimentDataset::concat(&[&test, &train]).unwrap(),
    ] {
        prop_assert_eq!(key(&joined), key(&ds));
    }
    let counts = ds.group_counts();
    prop_assert_eq!(counts.iter().sum::<usize>(), ds.len());
    prop_assert!((group_proportions(&ds).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    Ok(())
}

/// Constant recommendation `r` reduces to the mean outcome of group `r`.
pub fn constant_policy_is_group_mean(raw: &RawRows, r: usize) -> PropResult {
    let ds = raw.dataset();
    let r = r % ds.groups().len();
    let report = evaluate_policy(&vec![r; ds.len()], &ds, None).unwrap();
    let rows = ds.rows_of(r);
    let mean = rows.iter().map(|&i| ds.outcome()[i]).sum::<f64>() / rows.len() as f64;
    prop_assert!((report.matched_mean - mean).abs() < 1e-12);
    prop_assert_eq!(report.matched_n, rows.len());
    Ok(())
}

/// With zero costs and arm outcomes that dominate control, the mean
/// pseudo-effects on both source groups are nonnegative.
pub fn pseudo_effect_sign(raw: &RawRows) -> PropResult {
    use uplift::metalearn::build_nv_pseudo_effects;
    let mut raw = raw.clone();
    for r in &mut raw.rows {
        if r.2 != 0 {
            r.1 = 1.0;
        }
    }
    let ds = raw.dataset();
    let models: Vec<_> = (0..ds.groups().len())
        .map(|g| {
            let rows = ds.rows_of(g);
            let y: Vec<f64> = rows.iter().map(|&i| ds.outcome()[i]).collect();
            BaseLearner::Mean
                .fit(&ds.features().select_rows(&rows), &y, None, 0)
                .unwrap()
        })
        .collect();
    let pe = build_nv_pseudo_effects(&ds, &models, &CostStructure::free(1.0, ds.groups().len())).unwrap();
    for arm in &pe.arms {
        let m0 = arm.control.iter().sum::<f64>() / arm.control.len() as f64;
        let m1 = arm.treated.iter().sum::<f64>() / arm.treated.len() as f64;
        prop_assert!(m0 >= -1e-12 && m1 >= -1e-12);
    }
    Ok(())
}
