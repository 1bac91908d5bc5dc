//! Pairwise two-arm models for designs without a control group.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ModelSpec, UpliftModel};
use crate::dataset::{ExperimentDataset, GroupTable};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// One model per unordered group pair `(base, other)`, `base < other`,
/// trained with `base` acting as the control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseModel {
    pub groups: GroupTable,
    pub pairs: Vec<PairModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairModel {
    pub base: usize,
    pub other: usize,
    pub model: UpliftModel,
}

/// Predicted uplift of `other` over `base`, per pair and row.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseCates {
    pub n_groups: usize,
    pub pairs: Vec<(usize, usize)>,
    pub cates: Vec<Vec<f64>>,
}

pub fn fit_pairwise(train: &ExperimentDataset, spec: &ModelSpec) -> Result<PairwiseModel> {
    let k = train.groups().len();
    if k < 2 {
        return Err(Error::Validation("pairwise comparison needs at least two groups".into()));
    }
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect();
    let pairs = pairs
        .par_iter()
        .map(|&(base, other)| {
            let sub = train.restrict_groups(&[base, other], true)?;
            let mut s = spec.clone();
            s.cost = spec.cost.as_ref().map(|c| c.select(&[base, other]));
            Ok(PairModel {
                base,
                other,
                model: s.fit(&sub)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(PairwiseModel {
        groups: train.groups().clone(),
        pairs,
    })
}

impl PairwiseModel {
    pub fn n_features(&self) -> usize {
        self.pairs.first().map_or(0, |p| p.model.n_features)
    }

    pub fn predict(&self, x: &Matrix) -> Result<PairwiseCates> {
        let cates = self
            .pairs
            .iter()
            .map(|p| Ok(p.model.predict_cate(x)?.column(0)))
            .collect::<Result<_>>()?;
        Ok(PairwiseCates {
            n_groups: self.groups.len(),
            pairs: self.pairs.iter().map(|p| (p.base, p.other)).collect(),
            cates,
        })
    }
}
