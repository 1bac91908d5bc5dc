//! Synthetic multi-arm uplift data with known individual effects.
//!
//! Four kinds of columns are produced, in this order:
//!
//! * `inf*`: informative features. Gaussian clusters around random `±1`
//!   hypercube vertices, turned by a random rotation. They drive the baseline
//!   conversion `Y_base ~ Bernoulli(sigmoid(beta . x + b))`, with the intercept
//!   `b` found by bisection so that the population mean probability is `p0`.
//! * `upl*`: uplift features, `N(0, 1)`. Each group draws its own subset and
//!   weights, forming an uplift score. Within group `j` the top
//!   `ceil(lift * n_j)` rows receive `Y' = +1`, the bottom `ceil(neg_lift * n_j)`
//!   rows receive `Y' = -1`, and `Y = clip(Y_base + Y', 0, 1)`.
//! * `mix*`: `a * (uplift column) + b * (informative column)`, `a, b ~ U[-1, 1]`.
//! * `irr*`: irrelevant `N(0, 1)` noise.
//!
//! The within-group score thresholds are also applied to every unit under
//! every group, which yields potential conversion probabilities and hence an
//! exact oracle CATE.

use std::io::Write;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{ExperimentDataset, GroupTable, DEFAULT_CONTROL_LABEL};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

const CLUSTERS: usize = 4;

mod stream {
    pub const CLUSTERS: u64 = 101;
    pub const BASELINE: u64 = 102;
    pub const UPLIFT: u64 = 103;
    pub const MIX: u64 = 104;
    pub const IRRELEVANT: u64 = 105;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupLift {
    pub label: String,
    /// Fraction of the group receiving a positive lift.
    pub lift: f64,
    /// Fraction of the group receiving a negative lift.
    pub neg_lift: f64,
}

impl GroupLift {
    pub fn new(label: impl Into<String>, lift: f64, neg_lift: f64) -> Self {
        Self {
            label: label.into(),
            lift,
            neg_lift,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSpec {
    pub n_per_group: usize,
    pub groups: Vec<GroupLift>,
    /// Label of the control group; `None` (or a label not among the groups)
    /// generates a design without control.
    pub control_label: Option<String>,
    pub base_rate: f64,
    pub n_informative: usize,
    pub n_uplift: usize,
    pub n_mix: usize,
    pub n_irrelevant: usize,
    /// Uplift columns drawn per group (clamped to `n_uplift`).
    pub uplift_per_group: usize,
    /// Baseline weights are drawn from `U(-s, s)`; larger values make the
    /// baseline conversion vary more across units.
    pub baseline_scale: f64,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            n_per_group: 1000,
            groups: vec![GroupLift::new("control", 0.0, 0.0), GroupLift::new("t1", 0.1, 0.05)],
            control_label: Some(DEFAULT_CONTROL_LABEL.to_string()),
            base_rate: 0.1,
            n_informative: 5,
            n_uplift: 3,
            n_mix: 2,
            n_irrelevant: 10,
            uplift_per_group: 2,
            baseline_scale: 1.0,
            seed: 0,
        }
    }
}

impl GenSpec {
    pub fn n_features(&self) -> usize {
        self.n_informative + self.n_uplift + self.n_mix + self.n_irrelevant
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_rate > 0.0 && self.base_rate < 1.0) {
            return Err(Error::Param(format!(
                "base rate {} is unreachable, it must lie in (0, 1)",
                self.base_rate
            )));
        }
        if !(self.baseline_scale.is_finite() && self.baseline_scale >= 0.0) {
            return Err(Error::Param(format!(
                "baseline scale {} must be finite and non-negative",
                self.baseline_scale
            )));
        }
        if self.groups.is_empty() {
            return Err(Error::Param("at least one group is required".into()));
        }
        if self.n_per_group == 0 {
            return Err(Error::Param("n_per_group must be positive".into()));
        }
        for g in &self.groups {
            let ok = |v: f64| (0.0..=1.0).contains(&v);
            if !ok(g.lift) || !ok(g.neg_lift) || g.lift + g.neg_lift > 1.0 {
                return Err(Error::Param(format!(
                    "group '{}': lift {} and negative lift {} must be nonnegative with sum at most 1",
                    g.label, g.lift, g.neg_lift
                )));
            }
            if (g.lift > 0.0 || g.neg_lift > 0.0) && (self.n_uplift == 0 || self.uplift_per_group == 0) {
                return Err(Error::Param(format!("group '{}' has a lift but no uplift features", g.label)));
            }
        }
        if self.n_mix > 0 && (self.n_uplift == 0 || self.n_informative == 0) {
            return Err(Error::Param("mix features need informative and uplift features".into()));
        }
        if self.n_features() == 0 {
            return Err(Error::Param("at least one feature is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureRole {
    Informative,
    Uplift,
    Mix,
    Irrelevant,
}

impl FeatureRole {
    pub fn name(self) -> &'static str {
        match self {
            Self::Informative => "informative",
            Self::Uplift => "uplift",
            Self::Mix => "mix",
            Self::Irrelevant => "irrelevant",
        }
    }

    fn prefix(self) -> &'static str {
        match self {
            Self::Informative => "inf",
            Self::Uplift => "upl",
            Self::Mix => "mix",
            Self::Irrelevant => "irr",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub dataset: ExperimentDataset,
    /// Baseline conversion probability `sigmoid(beta . x + b)`.
    pub base_prob: Vec<f64>,
    pub base_outcome: Vec<f64>,
    /// Conversion probability under the group actually assigned.
    pub true_prob: Vec<f64>,
    /// Realized lift indicator `Y'` in {-1, 0, 1}.
    pub lift: Vec<i8>,
    /// Conversion probability of every unit under every group (columns are
    /// group indices).
    pub potential_prob: Matrix,
    /// Lift indicator of every unit under every group.
    pub potential_lift: Vec<Vec<i8>>,
    pub roles: Vec<FeatureRole>,
    pub intercept: f64,
}

impl GeneratedData {
    /// True CATE of each arm against control, columns in `groups().arms()`
    /// order. `None` without a control group.
    pub fn oracle_cate(&self) -> Option<Matrix> {
        let control = self.dataset.groups().control()?;
        let arms = self.dataset.groups().arms();
        let n = self.dataset.len();
        let mut m = Matrix::zeros(n, arms.len());
        for i in 0..n {
            let base = self.potential_prob.get(i, control);
            for (c, &a) in arms.iter().enumerate() {
                m.set(i, c, self.potential_prob.get(i, a) - base);
            }
        }
        Some(m)
    }

    /// Group with the highest true conversion probability per unit; ties go
    /// to the lowest group index.
    pub fn oracle_best_group(&self) -> Vec<usize> {
        (0..self.dataset.len())
            .map(|i| {
                let row = self.potential_prob.row(i);
                let mut best = 0;
                for g in 1..row.len() {
                    if row[g] > row[best] {
                        best = g;
                    }
                }
                best
            })
            .collect()
    }

    /// `row_id, group, true_prob, lift, true_prob_<label>..., lift_<label>...`
    pub fn write_truth_csv<W: Write>(&self, writer: W) -> Result<()> {
        let groups = self.dataset.groups();
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["row_id".to_string(), "group".into(), "true_prob".into(), "lift".into()];
        header.extend(groups.groups().iter().map(|g| format!("true_prob_{}", g.label)));
        header.extend(groups.groups().iter().map(|g| format!("lift_{}", g.label)));
        w.write_record(&header)?;
        for i in 0..self.dataset.len() {
            let mut rec = vec![
                i.to_string(),
                groups.label(self.dataset.assignment()[i]).to_string(),
                self.true_prob[i].to_string(),
                self.lift[i].to_string(),
            ];
            rec.extend(self.potential_prob.row(i).iter().map(f64::to_string));
            rec.extend((0..groups.len()).map(|g| self.potential_lift[g][i].to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `column, role` rows.
    pub fn write_roles_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["column", "role"])?;
        for (name, role) in self.dataset.feature_names().iter().zip(&self.roles) {
            w.write_record([name.as_str(), role.name()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Random orthogonal matrix by Gram-Schmidt on a Gaussian matrix.
fn random_rotation<R: Rng>(d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d);
    while basis.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

/// Intercept `b` with `mean(sigmoid(score + b)) = target`.
fn calibrate_intercept(scores: &[f64], target: f64) -> f64 {
    let mean = |b: f64| scores.iter().map(|s| sigmoid(s + b)).sum::<f64>() / scores.len() as f64;
    let (mut lo, mut hi) = (-1.0, 1.0);
    while mean(lo) > target {
        lo *= 2.0;
    }
    while mean(hi) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}

pub fn generate(spec: &GenSpec) -> Result<GeneratedData> {
    spec.validate()?;
    let labels: Vec<&str> = spec.groups.iter().map(|g| g.label.as_str()).collect();
    let control = spec
        .control_label
        .as_deref()
        .filter(|c| labels.contains(c));
    let table = GroupTable::new(&labels, control)?;
    let n_groups = table.len();
    let n = spec.n_per_group * n_groups;
    // group index (table order) of each spec entry
    let lifts: Vec<&GroupLift> = (0..n_groups)
        .map(|g| {
            spec.groups
                .iter()
                .find(|s| s.label == table.label(g))
                .expect("table built from these labels")
        })
        .collect();
    let assignment: Vec<usize> = (0..n).map(|i| i / spec.n_per_group).collect();

    // informative features and baseline outcome
    let d_inf = spec.n_informative;
    let mut rng = seed::rng(seed::derive(spec.seed, stream::CLUSTERS));
    let centroids: Vec<Vec<f64>> = (0..CLUSTERS)
        .map(|_| (0..d_inf).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect())
        .collect();
    let rotation = random_rotation(d_inf, &mut rng);
    let informative: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let c = &centroids[rng.random_range(0..CLUSTERS)];
            let raw: Vec<f64> = c.iter().map(|m| m + normal(&mut rng)).collect();
            rotation
                .iter()
                .map(|r| r.iter().zip(&raw).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();

    let mut rng = seed::rng(seed::derive(spec.seed, stream::BASELINE));
    let beta: Vec<f64> = (0..d_inf)
        .map(|_| spec.baseline_scale * rng.random_range(-1.0..1.0))
        .collect();
    let score: Vec<f64> = informative
        .iter()
        .map(|x| x.iter().zip(&beta).map(|(a, b)| a * b).sum())
        .collect();
    let intercept = calibrate_intercept(&score, spec.base_rate);
    let base_prob: Vec<f64> = score.iter().map(|s| sigmoid(s + intercept)).collect();
    let base_outcome: Vec<f64> = base_prob
        .iter()
        .map(|&p| f64::from(u8::from(rng.random::<f64>() < p)))
        .collect();

    // uplift features and per-group lift thresholds
    let mut rng = seed::rng(seed::derive(spec.seed, stream::UPLIFT));
    let uplift: Vec<Vec<f64>> = (0..spec.n_uplift)
        .map(|_| (0..n).map(|_| normal(&mut rng)).collect())
        .collect();
    let per_group = spec.uplift_per_group.min(spec.n_uplift);
    let mut potential_lift = vec![vec![0i8; n]; n_groups];
    for g in 0..n_groups {
        if per_group == 0 {
            continue;
        }
        let mut cols = sample(&mut rng, spec.n_uplift, per_group).into_vec();
        cols.sort_unstable();
        let weights: Vec<f64> = cols.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let u_score: Vec<f64> = (0..n)
            .map(|i| cols.iter().zip(&weights).map(|(&c, w)| w * uplift[c][i]).sum())
            .collect();
        let (lift, neg) = (lifts[g].lift, lifts[g].neg_lift);
        if lift == 0.0 && neg == 0.0 {
            continue;
        }
        let mut members: Vec<usize> = (0..n).filter(|&i| assignment[i] == g).collect();
        members.sort_by(|&a, &b| u_score[b].total_cmp(&u_score[a]).then(a.cmp(&b)));
        let n_g = members.len();
        let n_top = ((lift * n_g as f64).ceil() as usize).min(n_g);
        let n_bottom = ((neg * n_g as f64).ceil() as usize).min(n_g - n_top);
        let top = (n_top > 0).then(|| u_score[members[n_top - 1]]);
        let bottom = (n_bottom > 0).then(|| u_score[members[n_g - n_bottom]]);
        // members of the group get exactly the quantile counts; other units
        // are placed by the same thresholds
        for &i in &members[..n_top] {
            potential_lift[g][i] = 1;
        }
        for &i in &members[n_g - n_bottom..] {
            potential_lift[g][i] = -1;
        }
        for i in (0..n).filter(|&i| assignment[i] != g) {
            if top.is_some_and(|t| u_score[i] >= t) {
                potential_lift[g][i] = 1;
            } else if bottom.is_some_and(|t| u_score[i] <= t) {
                potential_lift[g][i] = -1;
            }
        }
    }

    let mut rng = seed::rng(seed::derive(spec.seed, stream::MIX));
    let mix: Vec<Vec<f64>> = (0..spec.n_mix)
        .map(|_| {
            let u = rng.random_range(0..spec.n_uplift);
            let k = rng.random_range(0..d_inf);
            let a = rng.random_range(-1.0..=1.0);
            let b = rng.random_range(-1.0..=1.0);
            (0..n).map(|i| a * uplift[u][i] + b * informative[i][k]).collect()
        })
        .collect();

    let mut rng = seed::rng(seed::derive(spec.seed, stream::IRRELEVANT));
    let irrelevant: Vec<Vec<f64>> = (0..spec.n_irrelevant)
        .map(|_| (0..n).map(|_| normal(&mut rng)).collect())
        .collect();

    let mut roles = Vec::with_capacity(spec.n_features());
    roles.extend(std::iter::repeat_n(FeatureRole::Informative, d_inf));
    roles.extend(std::iter::repeat_n(FeatureRole::Uplift, spec.n_uplift));
    roles.extend(std::iter::repeat_n(FeatureRole::Mix, spec.n_mix));
    roles.extend(std::iter::repeat_n(FeatureRole::Irrelevant, spec.n_irrelevant));
    let mut names = Vec::with_capacity(roles.len());
    let mut counter = [0usize; 4];
    for r in &roles {
        let k = *r as usize;
        names.push(format!("{}{}", r.prefix(), counter[k]));
        counter[k] += 1;
    }

    let d = roles.len();
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        data.extend_from_slice(&informative[i]);
        data.extend(uplift.iter().map(|c| c[i]));
        data.extend(mix.iter().map(|c| c[i]));
        data.extend(irrelevant.iter().map(|c| c[i]));
    }
    let features = Matrix::new(n, d, data)?;

    let mut potential_prob = Matrix::zeros(n, n_groups);
    for i in 0..n {
        for (g, pl) in potential_lift.iter().enumerate() {
            let q = match pl[i] {
                1 => 1.0,
                -1 => 0.0,
                _ => base_prob[i],
            };
            potential_prob.set(i, g, q);
        }
    }
    let lift: Vec<i8> = (0..n).map(|i| potential_lift[assignment[i]][i]).collect();
    let outcome: Vec<f64> = (0..n)
        .map(|i| (base_outcome[i] + f64::from(lift[i])).clamp(0.0, 1.0))
        .collect();
    let true_prob: Vec<f64> = (0..n).map(|i| potential_prob.get(i, assignment[i])).collect();

    let dataset = ExperimentDataset::new(features, names, outcome, assignment, table)?;
    Ok(GeneratedData {
        dataset,
        base_prob,
        base_outcome,
        true_prob,
        lift,
        potential_prob,
        potential_lift,
        roles,
        intercept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_arm(seed: u64, n: usize) -> GenSpec {
        GenSpec {
            n_per_group: n,
            groups: vec![GroupLift::new("control", 0.0, 0.0), GroupLift::new("t1", 0.25, 0.125)],
            seed,
            ..GenSpec::default()
        }
    }

    #[test]
    fn shape_and_roles() {
        let g = generate(&two_arm(1, 50)).unwrap();
        assert_eq!(g.dataset.n_features(), 20);
        assert_eq!(g.dataset.len(), 100);
        let count = |r| g.roles.iter().filter(|&&x| x == r).count();
        assert_eq!(count(FeatureRole::Informative), 5);
        assert_eq!(count(FeatureRole::Uplift), 3);
        assert_eq!(count(FeatureRole::Mix), 2);
        assert_eq!(count(FeatureRole::Irrelevant), 10);
        assert_eq!(g.dataset.feature_names()[0], "inf0");
        assert_eq!(g.dataset.feature_names()[5], "upl0");
        assert_eq!(g.dataset.feature_names()[19], "irr9");
    }

    #[test]
    fn deterministic() {
        let a = generate(&two_arm(5, 200)).unwrap();
        let b = generate(&two_arm(5, 200)).unwrap();
        assert_eq!(a, b);
        let c = generate(&two_arm(6, 200)).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn clipping_rule_and_counts() {
        let g = generate(&two_arm(3, 333)).unwrap();
        let ds = &g.dataset;
        for i in 0..ds.len() {
            let y = ds.outcome()[i];
            match g.lift[i] {
                1 => assert_eq!(y, 1.0),
                -1 => assert_eq!(y, 0.0),
                _ => assert_eq!(y, g.base_outcome[i]),
            }
        }
        let arm = ds.groups().index_of("t1").unwrap();
        let rows = ds.rows_of(arm);
        let pos = rows.iter().filter(|&&i| g.lift[i] == 1).count();
        let neg = rows.iter().filter(|&&i| g.lift[i] == -1).count();
        assert_eq!(pos, (0.25f64 * 333.0).ceil() as usize);
        assert_eq!(neg, (0.125f64 * 333.0).ceil() as usize);
        assert!(ds.rows_of(0).iter().all(|&i| g.lift[i] == 0));
    }

    #[test]
    fn base_rate_is_calibrated() {
        let g = generate(&two_arm(9, 2000)).unwrap();
        let mean = g.base_prob.iter().sum::<f64>() / g.base_prob.len() as f64;
        assert!((mean - 0.1).abs() < 1e-9);
    }

    #[test]
    fn oracle_matches_lift_indicators() {
        let g = generate(&two_arm(2, 100)).unwrap();
        let cate = g.oracle_cate().unwrap();
        for i in 0..g.dataset.len() {
            let expected = match g.potential_lift[1][i] {
                1 => 1.0 - g.base_prob[i],
                -1 => -g.base_prob[i],
                _ => 0.0,
            };
            assert!((cate.get(i, 0) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn control_placed_first_and_no_control_mode() {
        let spec = GenSpec {
            n_per_group: 10,
            groups: vec![GroupLift::new("t1", 0.1, 0.0), GroupLift::new("control", 0.0, 0.0)],
            ..GenSpec::default()
        };
        let g = generate(&spec).unwrap();
        assert_eq!(g.dataset.groups().label(0), "control");
        let spec = GenSpec {
            control_label: None,
            ..spec
        };
        let g = generate(&spec).unwrap();
        assert!(!g.dataset.has_control());
        assert!(g.oracle_cate().is_none());
    }

    #[test]
    fn invalid_specs() {
        let mut s = two_arm(0, 10);
        s.base_rate = 1.0;
        assert!(generate(&s).is_err());
        let mut s = two_arm(0, 10);
        s.groups[1].neg_lift = 0.9;
        let err = generate(&s).unwrap_err().to_string();
        assert!(err.contains("t1"), "{err}");
        let mut s = two_arm(0, 10);
        s.n_uplift = 0;
        s.n_mix = 0;
        assert!(generate(&s).is_err());
        let mut s = two_arm(0, 10);
        s.baseline_scale = f64::NAN;
        assert!(generate(&s).is_err());
    }

    #[test]
    fn zero_baseline_scale_gives_constant_base_rate() {
        let mut s = two_arm(3, 200);
        s.baseline_scale = 0.0;
        let data = generate(&s).unwrap();
        assert!(data.base_prob.iter().all(|p| (p - 0.1).abs() < 1e-9));
    }
}
