use serde::{Deserialize, Serialize};

use crate::dataset::ExperimentDataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metalearn::best_arm;

pub const DEFAULT_BINS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveScaling {
    /// `u(p) = p * (treated mean - control mean)`, so `u(1)` is the ATE.
    #[default]
    Population,
    /// `u(p)` is the plain mean difference within the top-`p` prefix.
    Unscaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub p: f64,
    pub u: f64,
    /// The prefix lacked treated or control units; `u` was carried forward.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpliftCurve {
    pub n_bins: usize,
    pub points: Vec<CurvePoint>,
    pub auuc: f64,
    pub scaling: CurveScaling,
}

impl UpliftCurve {
    pub fn endpoint(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.u)
    }

    pub fn any_flagged(&self) -> bool {
        self.points.iter().any(|p| p.flagged)
    }

    /// `p,u,flagged` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("p,u,flagged\n");
        for pt in &self.points {
            s.push_str(&format!("{},{},{}\n", pt.p, pt.u, u8::from(pt.flagged)));
        }
        s
    }
}

/// Mean of `u(p)` over the bin grid.
pub fn auuc(curve: &UpliftCurve) -> f64 {
    if curve.points.is_empty() {
        return 0.0;
    }
    curve.points.iter().map(|p| p.u).sum::<f64>() / curve.points.len() as f64
}

/// Which side of the comparison a row contributes to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Treated,
    Control,
    Ignored,
}

/// Cumulative curve over rows ordered by descending score.
///
/// Rows are sorted stably (ties keep row order) and rows with equal scores
/// form one block. A prefix that ends inside a block takes the same fraction of
/// every row in it, so the curve depends only on the score ordering, not on the
/// input row order.
fn build_curve(scores: &[f64], roles: &[Role], y: &[f64], n_bins: usize, scaling: CurveScaling) -> Result<UpliftCurve> {
    if n_bins == 0 {
        return Err(Error::Param("n_bins must be at least 1".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Validation("scores must be finite".into()));
    }
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    // block sums: (treated count, treated sum, control count, control sum)
    let mut blocks: Vec<(usize, usize, [f64; 4])> = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let mut s = [0.0; 4];
        for &i in &order[start..end] {
            match roles[i] {
                Role::Treated => {
                    s[0] += 1.0;
                    s[1] += y[i];
                }
                Role::Control => {
                    s[2] += 1.0;
                    s[3] += y[i];
                }
                Role::Ignored => {}
            }
        }
        blocks.push((start, end, s));
        start = end;
    }

    let mut points = Vec::with_capacity(n_bins);
    let mut acc = [0.0; 4];
    let mut b = 0;
    let mut prev_u = 0.0;
    for bin in 1..=n_bins {
        let p = bin as f64 / n_bins as f64;
        let mass = if bin == n_bins { n as f64 } else { n as f64 * p };
        while b < blocks.len() && (blocks[b].1 as f64) <= mass {
            for k in 0..4 {
                acc[k] += blocks[b].2[k];
            }
            b += 1;
        }
        let mut cur = acc;
        if b < blocks.len() {
            let (s, e, sums) = blocks[b];
            let frac = (mass - s as f64) / (e - s) as f64;
            if frac > 0.0 {
                for k in 0..4 {
                    cur[k] += frac * sums[k];
                }
            }
        }
        let (u, flagged) = if cur[0] > 0.0 && cur[2] > 0.0 {
            let diff = cur[1] / cur[0] - cur[3] / cur[2];
            let u = match scaling {
                CurveScaling::Population => p * diff,
                CurveScaling::Unscaled => diff,
            };
            (u, false)
        } else {
            (prev_u, true)
        };
        prev_u = u;
        points.push(CurvePoint { p, u, flagged });
    }
    let mut curve = UpliftCurve {
        n_bins,
        points,
        auuc: 0.0,
        scaling,
    };
    curve.auuc = auuc(&curve);
    Ok(curve)
}

/// Two-arm uplift curve: `ds` must hold a control and exactly one treatment.
pub fn uplift_curve_two_arm(scores: &[f64], ds: &ExperimentDataset, n_bins: usize) -> Result<UpliftCurve> {
    uplift_curve_two_arm_scaled(scores, ds, n_bins, CurveScaling::Population)
}

pub fn uplift_curve_two_arm_scaled(
    scores: &[f64],
    ds: &ExperimentDataset,
    n_bins: usize,
    scaling: CurveScaling,
) -> Result<UpliftCurve> {
    let control = ds
        .groups()
        .control()
        .ok_or_else(|| Error::Validation("uplift curve requires a control group".into()))?;
    if ds.groups().len() != 2 {
        return Err(Error::Validation(format!(
            "two-arm curve needs exactly one treatment, found {}",
            ds.groups().len() - 1
        )));
    }
    check_len(scores.len(), ds.len())?;
    let roles: Vec<Role> = ds
        .assignment()
        .iter()
        .map(|&g| if g == control { Role::Control } else { Role::Treated })
        .collect();
    build_curve(scores, &roles, ds.outcome(), n_bins, scaling)
}

/// Multi-arm curve: rows sorted by their best-arm score; a treated row counts
/// only when its actual arm equals its recommended arm.
pub fn uplift_curve_multi_arm(
    cate: &Matrix,
    recommended: &[usize],
    ds: &ExperimentDataset,
    n_bins: usize,
) -> Result<UpliftCurve> {
    uplift_curve_multi_arm_scaled(cate, recommended, ds, n_bins, CurveScaling::Population)
}

pub fn uplift_curve_multi_arm_scaled(
    cate: &Matrix,
    recommended: &[usize],
    ds: &ExperimentDataset,
    n_bins: usize,
    scaling: CurveScaling,
) -> Result<UpliftCurve> {
    let control = ds
        .groups()
        .control()
        .ok_or_else(|| Error::Validation("uplift curve requires a control group".into()))?;
    check_len(cate.rows(), ds.len())?;
    check_len(recommended.len(), ds.len())?;
    if cate.cols() == 0 {
        return Err(Error::Validation("no arm columns".into()));
    }
    let scores: Vec<f64> = (0..cate.rows()).map(|i| best_arm(cate.row(i)).1).collect();
    let roles: Vec<Role> = ds
        .assignment()
        .iter()
        .zip(recommended)
        .map(|(&g, &r)| {
            if g == control {
                Role::Control
            } else if g == r {
                Role::Treated
            } else {
                Role::Ignored
            }
        })
        .collect();
    build_curve(&scores, &roles, ds.outcome(), n_bins, scaling)
}

fn check_len(got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Validation(format!("{got} scores for {expected} rows")));
    }
    Ok(())
}
