use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{CostStructure, ExperimentDataset};
use crate::error::{Error, Result};
use crate::metalearn::PairwiseCates;
use crate::seed;

const Z95: f64 = 1.96;

/// Majority vote over pairwise comparisons. A pair `(a, b)` votes for `b`
/// when its predicted uplift of `b` over `a` is positive, else for `a`. Tied
/// vote counts are broken uniformly at random from a stream seeded by `seed`.
pub fn majority_vote_recommend(pairwise: &PairwiseCates, seed_: u64) -> Result<Vec<usize>> {
    let k = pairwise.n_groups;
    let mut index = vec![vec![None; k]; k];
    for (p, &(a, b)) in pairwise.pairs.iter().enumerate() {
        if a >= k || b >= k || a == b {
            return Err(Error::Validation(format!("invalid pair ({a}, {b})")));
        }
        index[a.min(b)][a.max(b)] = Some(p);
    }
    for a in 0..k {
        for b in a + 1..k {
            if index[a][b].is_none() {
                return Err(Error::Validation(format!("missing pairwise prediction for groups ({a}, {b})")));
            }
        }
    }
    let n = pairwise.cates.first().map_or(0, Vec::len);
    if pairwise.cates.iter().any(|c| c.len() != n) {
        return Err(Error::Validation("pairwise predictions have different lengths".into()));
    }

    let mut rng = seed::rng(seed_);
    let mut votes = vec![0usize; k];
    let mut tied = Vec::with_capacity(k);
    Ok((0..n)
        .map(|i| {
            votes.iter_mut().for_each(|v| *v = 0);
            for (p, &(a, b)) in pairwise.pairs.iter().enumerate() {
                if pairwise.cates[p][i] > 0.0 {
                    votes[b] += 1;
                } else {
                    votes[a] += 1;
                }
            }
            let max = *votes.iter().max().unwrap_or(&0);
            tied.clear();
            tied.extend((0..k).filter(|&g| votes[g] == max));
            if tied.len() == 1 {
                tied[0]
            } else {
                tied[rng.random_range(0..tied.len())]
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub net_value: bool,
    pub n: usize,
    pub matched_n: usize,
    pub matched_mean: f64,
    /// Half-width of the 95% interval around `matched_mean`.
    pub matched_ci: f64,
    pub unmatched_n: usize,
    pub unmatched_mean: Option<f64>,
    /// `matched_mean - unmatched_mean`.
    pub difference: Option<f64>,
    pub difference_ci: Option<f64>,
    /// Every row was recommended its actual group.
    pub full_match: bool,
    /// Recommendation counts, indexed by group.
    pub assignment_counts: Vec<usize>,
}

impl PolicyReport {
    /// `key=value` lines; undefined quantities are written as `NA`.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| v.to_string());
        let mut s = String::new();
        s.push_str(&format!("objective={}\n", if self.net_value { "net_value" } else { "conversion" }));
        s.push_str(&format!("n={}\n", self.n));
        s.push_str(&format!("matched_n={}\n", self.matched_n));
        s.push_str(&format!("matched_mean={}\n", self.matched_mean));
        s.push_str(&format!("matched_ci95={}\n", self.matched_ci));
        s.push_str(&format!("unmatched_n={}\n", self.unmatched_n));
        s.push_str(&format!("unmatched_mean={}\n", opt(self.unmatched_mean)));
        s.push_str(&format!("difference={}\n", opt(self.difference)));
        s.push_str(&format!("difference_ci95={}\n", opt(self.difference_ci)));
        s.push_str(&format!("full_match={}\n", self.full_match));
        s
    }
}

/// Realized per-unit value: `Y`, or `(v - s_W) Y - c_W` under a cost structure.
pub fn realized_values(ds: &ExperimentDataset, cost: Option<&CostStructure>) -> Vec<f64> {
    ds.outcome()
        .iter()
        .zip(ds.assignment())
        .map(|(&y, &g)| cost.map_or(y, |c| c.unit_value(g, y)))
        .collect()
}

/// Mean and standard error of the mean (sample SD / sqrt(n)).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Compares rows whose actual group equals the recommendation with the rest.
pub fn evaluate_policy(recommended: &[usize], ds: &ExperimentDataset, cost: Option<&CostStructure>) -> Result<PolicyReport> {
    if recommended.len() != ds.len() {
        return Err(Error::Validation(format!(
            "{} recommendations for {} rows",
            recommended.len(),
            ds.len()
        )));
    }
    if let Some(c) = cost {
        c.validate(ds.groups().len())?;
    }
    let values = realized_values(ds, cost);
    let mut matched = Vec::new();
    let mut unmatched = Vec::new();
    let mut counts = vec![0; ds.groups().len()];
    for (i, &r) in recommended.iter().enumerate() {
        if r >= counts.len() {
            return Err(Error::Validation(format!("recommendation {r} outside group table")));
        }
        counts[r] += 1;
        if ds.assignment()[i] == r {
            matched.push(values[i]);
        } else {
            unmatched.push(values[i]);
        }
    }
    if matched.is_empty() {
        return Err(Error::Insufficient("no row received its recommended group".into()));
    }
    let (mm, mse) = mean_se(&matched);
    let (unmatched_mean, difference, difference_ci) = if unmatched.is_empty() {
        (None, None, None)
    } else {
        let (um, use_) = mean_se(&unmatched);
        (Some(um), Some(mm - um), Some(Z95 * (mse * mse + use_ * use_).sqrt()))
    };
    Ok(PolicyReport {
        net_value: cost.is_some(),
        n: ds.len(),
        matched_n: matched.len(),
        matched_mean: mm,
        matched_ci: Z95 * mse,
        unmatched_n: unmatched.len(),
        unmatched_mean,
        difference,
        difference_ci,
        full_match: unmatched.is_empty(),
        assignment_counts: counts,
    })
}

/// Mean realized value per group, the value of assigning everyone that group.
pub fn single_arm_values(ds: &ExperimentDataset, cost: Option<&CostStructure>) -> Vec<Option<f64>> {
    let values = realized_values(ds, cost);
    (0..ds.groups().len())
        .map(|g| {
            let v: Vec<f64> = ds.rows_of(g).into_iter().map(|i| values[i]).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect()
}
