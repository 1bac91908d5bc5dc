//! Experiment data model, CSV ingestion and stratified splitting.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

pub const DEFAULT_GROUP_COLUMN: &str = "group";
pub const DEFAULT_OUTCOME_COLUMN: &str = "y";
pub const DEFAULT_CONTROL_LABEL: &str = "control";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupId {
    pub index: usize,
    pub label: String,
}

/// Ordered set of experiment groups. When a control exists it has index 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupTable {
    groups: Vec<GroupId>,
    has_control: bool,
}

impl GroupTable {
    /// Builds a table from distinct labels. The label equal to
    /// `control_label` (if any) becomes index 0; the rest keep their order.
    pub fn new<S: AsRef<str>>(labels: &[S], control_label: Option<&str>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for l in labels {
            let l = l.as_ref();
            if l.is_empty() {
                return Err(Error::Validation("empty group label".into()));
            }
            if !seen.insert(l.to_string()) {
                return Err(Error::Validation(format!("duplicate group label `{l}`")));
            }
        }
        let mut ordered: Vec<String> = labels.iter().map(|l| l.as_ref().to_string()).collect();
        let mut has_control = false;
        if let Some(c) = control_label {
            if let Some(pos) = ordered.iter().position(|l| l == c) {
                let label = ordered.remove(pos);
                ordered.insert(0, label);
                has_control = true;
            }
        }
        Ok(Self {
            groups: ordered
                .into_iter()
                .enumerate()
                .map(|(index, label)| GroupId { index, label })
                .collect(),
            has_control,
        })
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn has_control(&self) -> bool {
        self.has_control
    }

    /// Index of the control group, always 0 when present.
    pub fn control(&self) -> Option<usize> {
        self.has_control.then_some(0)
    }

    pub fn groups(&self) -> &[GroupId] {
        &self.groups
    }

    pub fn label(&self, index: usize) -> &str {
        &self.groups[index].label
    }

    pub fn labels(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.label.clone()).collect()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.label == label)
    }

    /// Non-control group indices in table order.
    pub fn arms(&self) -> Vec<usize> {
        let start = usize::from(self.has_control);
        (start..self.groups.len()).collect()
    }
}

/// Conversion value and per-group costs, aligned to a [`GroupTable`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostStructure {
    pub conversion_value: f64,
    pub impression_cost: Vec<f64>,
    pub triggered_cost: Vec<f64>,
}

/// One group's costs, keyed by label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCost {
    pub label: String,
    #[serde(default)]
    pub impression_cost: f64,
    #[serde(default)]
    pub triggered_cost: f64,
}

impl CostStructure {
    /// Zero costs for every group.
    pub fn free(conversion_value: f64, n_groups: usize) -> Self {
        Self {
            conversion_value,
            impression_cost: vec![0.0; n_groups],
            triggered_cost: vec![0.0; n_groups],
        }
    }

    pub fn new(conversion_value: f64, impression_cost: Vec<f64>, triggered_cost: Vec<f64>) -> Result<Self> {
        let c = Self {
            conversion_value,
            impression_cost,
            triggered_cost,
        };
        c.validate(c.impression_cost.len())?;
        Ok(c)
    }

    /// Aligns per-label records to `groups`. A missing control entry
    /// defaults to zero cost; any other missing group is an error.
    pub fn from_records(conversion_value: f64, records: &[GroupCost], groups: &GroupTable) -> Result<Self> {
        let mut impression = vec![0.0; groups.len()];
        let mut triggered = vec![0.0; groups.len()];
        let mut seen = vec![false; groups.len()];
        for r in records {
            let idx = groups
                .index_of(&r.label)
                .ok_or_else(|| Error::Validation(format!("cost entry for unknown group `{}`", r.label)))?;
            if seen[idx] {
                return Err(Error::Validation(format!("duplicate cost entry for group `{}`", r.label)));
            }
            seen[idx] = true;
            impression[idx] = r.impression_cost;
            triggered[idx] = r.triggered_cost;
        }
        for (idx, ok) in seen.iter().enumerate() {
            if !ok && groups.control() != Some(idx) {
                return Err(Error::Validation(format!(
                    "missing cost entry for group `{}`",
                    groups.label(idx)
                )));
            }
        }
        Self::new(conversion_value, impression, triggered)
    }

    pub fn validate(&self, n_groups: usize) -> Result<()> {
        if self.impression_cost.len() != n_groups || self.triggered_cost.len() != n_groups {
            return Err(Error::Validation(format!(
                "cost structure has {}/{} entries, expected {n_groups}",
                self.impression_cost.len(),
                self.triggered_cost.len()
            )));
        }
        let all = std::iter::once(self.conversion_value)
            .chain(self.impression_cost.iter().copied())
            .chain(self.triggered_cost.iter().copied());
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite cost value".into()));
        }
        for (g, s) in self.triggered_cost.iter().enumerate() {
            if self.conversion_value - s < 0.0 {
                warn!("group {g}: triggered cost {s} exceeds conversion value {}", self.conversion_value);
            }
        }
        Ok(())
    }

    /// Net value of one unit observed in `group` with outcome `y`.
    pub fn unit_value(&self, group: usize, y: f64) -> f64 {
        (self.conversion_value - self.triggered_cost[group]) * y - self.impression_cost[group]
    }

    /// Multiplies the value and every cost by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            conversion_value: self.conversion_value * k,
            impression_cost: self.impression_cost.iter().map(|c| c * k).collect(),
            triggered_cost: self.triggered_cost.iter().map(|s| s * k).collect(),
        }
    }

    /// Keeps only the listed groups, in the given order.
    pub fn select(&self, groups: &[usize]) -> Self {
        Self {
            conversion_value: self.conversion_value,
            impression_cost: groups.iter().map(|&g| self.impression_cost[g]).collect(),
            triggered_cost: groups.iter().map(|&g| self.triggered_cost[g]).collect(),
        }
    }
}

/// One randomized experiment: features, binary outcomes and group assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentDataset {
    features: Matrix,
    feature_names: Vec<String>,
    outcome: Vec<f64>,
    assignment: Vec<usize>,
    groups: GroupTable,
}

impl ExperimentDataset {
    pub fn new(
        features: Matrix,
        feature_names: Vec<String>,
        outcome: Vec<f64>,
        assignment: Vec<usize>,
        groups: GroupTable,
    ) -> Result<Self> {
        let n = features.rows();
        if outcome.len() != n || assignment.len() != n {
            return Err(Error::Validation(format!(
                "length mismatch: {n} feature rows, {} outcomes, {} assignments",
                outcome.len(),
                assignment.len()
            )));
        }
        if feature_names.len() != features.cols() {
            return Err(Error::Validation(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.cols()
            )));
        }
        if let Some(i) = outcome.iter().position(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::Validation(format!(
                "row {}: outcome {} is not 0 or 1",
                i + 1,
                outcome[i]
            )));
        }
        if let Some(i) = assignment.iter().position(|&g| g >= groups.len()) {
            return Err(Error::Validation(format!(
                "row {}: assignment {} outside group table",
                i + 1,
                assignment[i]
            )));
        }
        if !features.all_finite() {
            return Err(Error::Validation("feature matrix contains non-finite values".into()));
        }
        Ok(Self {
            features,
            feature_names,
            outcome,
            assignment,
            groups,
        })
    }

    pub fn len(&self) -> usize {
        self.outcome.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcome.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn groups(&self) -> &GroupTable {
        &self.groups
    }

    pub fn has_control(&self) -> bool {
        self.groups.has_control()
    }

    pub fn group_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.groups.len()];
        for &g in &self.assignment {
            counts[g] += 1;
        }
        counts
    }

    pub fn rows_of(&self, group: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.assignment[i] == group).collect()
    }

    /// Row subset with the same group table.
    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(rows),
            feature_names: self.feature_names.clone(),
            outcome: rows.iter().map(|&i| self.outcome[i]).collect(),
            assignment: rows.iter().map(|&i| self.assignment[i]).collect(),
            groups: self.groups.clone(),
        }
    }

    /// Keeps rows of the listed groups and renumbers them in that order.
    /// With `first_is_control`, the first listed group becomes the control.
    pub fn restrict_groups(&self, keep: &[usize], first_is_control: bool) -> Result<Self> {
        let labels: Vec<&str> = keep.iter().map(|&g| self.groups.label(g)).collect();
        let control = if first_is_control { labels.first().copied() } else { None };
        let table = GroupTable::new(&labels, control)?;
        let rows: Vec<usize> = (0..self.len())
            .filter(|&i| keep.contains(&self.assignment[i]))
            .collect();
        let assignment = rows
            .iter()
            .map(|&i| keep.iter().position(|&g| g == self.assignment[i]).unwrap())
            .collect();
        Ok(Self {
            features: self.features.select_rows(&rows),
            feature_names: self.feature_names.clone(),
            outcome: rows.iter().map(|&i| self.outcome[i]).collect(),
            assignment,
            groups: table,
        })
    }

    /// Re-expresses assignments against `table`, matching groups by label.
    pub fn align_groups(&self, table: &GroupTable) -> Result<Self> {
        let map: Vec<usize> = self
            .groups
            .groups()
            .iter()
            .map(|g| {
                table
                    .index_of(&g.label)
                    .ok_or_else(|| Error::Validation(format!("group `{}` not in model group table", g.label)))
            })
            .collect::<Result<_>>()?;
        let mut out = self.clone();
        out.assignment = self.assignment.iter().map(|&g| map[g]).collect();
        out.groups = table.clone();
        Ok(out)
    }

    /// Concatenates datasets that share a group table and feature names.
    pub fn concat(parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Validation("nothing to concatenate".into()))?;
        let mut data = Vec::new();
        let mut outcome = Vec::new();
        let mut assignment = Vec::new();
        for p in parts {
            if p.groups != first.groups || p.feature_names != first.feature_names {
                return Err(Error::Validation("datasets have different schemas".into()));
            }
            data.extend_from_slice(p.features.as_slice());
            outcome.extend_from_slice(&p.outcome);
            assignment.extend_from_slice(&p.assignment);
        }
        let features = Matrix::new(outcome.len(), first.n_features(), data)?;
        Self::new(
            features,
            first.feature_names.clone(),
            outcome,
            assignment,
            first.groups.clone(),
        )
    }
}

/// Empirical group shares `n_j / n`.
pub fn group_proportions(ds: &ExperimentDataset) -> Vec<f64> {
    let n = ds.len() as f64;
    ds.group_counts().into_iter().map(|c| c as f64 / n).collect()
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

/// Per-group shuffled split; each group's test share is
/// `round(n_g * test_fraction)`, clamped so both sides keep a row.
pub fn stratified_split(ds: &ExperimentDataset, spec: SplitSpec) -> Result<(ExperimentDataset, ExperimentDataset)> {
    let (train, test) = stratified_split_indices(ds, spec)?;
    Ok((ds.subset(&train), ds.subset(&test)))
}

/// Row indices `(train, test)` of [`stratified_split`], each ascending.
pub fn stratified_split_indices(ds: &ExperimentDataset, spec: SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::Param(format!(
            "test_fraction must be in (0,1), got {}",
            spec.test_fraction
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for g in 0..ds.groups().len() {
        let mut rows = ds.rows_of(g);
        if rows.is_empty() {
            continue;
        }
        if rows.len() < 2 {
            return Err(Error::Insufficient(format!(
                "group `{}` has a single observation and cannot be split",
                ds.groups().label(g)
            )));
        }
        let mut rng = seed::rng(seed::derive(spec.seed, g as u64));
        rows.shuffle(&mut rng);
        let n_test = ((rows.len() as f64 * spec.test_fraction).round() as usize).clamp(1, rows.len() - 1);
        let (t, r) = rows.split_at(n_test);
        test.extend_from_slice(t);
        train.extend_from_slice(r);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Column mapping for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub group_column: String,
    pub outcome_column: String,
    /// Explicit feature columns; `None` means every other column.
    pub feature_columns: Option<Vec<String>>,
    pub control_label: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            group_column: DEFAULT_GROUP_COLUMN.into(),
            outcome_column: DEFAULT_OUTCOME_COLUMN.into(),
            feature_columns: None,
            control_label: Some(DEFAULT_CONTROL_LABEL.into()),
        }
    }
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
}

fn parse_feature(cell: &str, row: usize, column: &str) -> Result<f64> {
    let t = cell.trim();
    if t.is_empty() {
        return Err(Error::Parse {
            row,
            column: column.into(),
            message: "missing value".into(),
        });
    }
    let v: f64 = t.parse().map_err(|_| Error::Parse {
        row,
        column: column.into(),
        message: format!("`{t}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            column: column.into(),
            message: format!("`{t}` is not finite"),
        });
    }
    Ok(v)
}

fn feature_indices(headers: &csv::StringRecord, explicit: Option<&[String]>, exclude: &[usize]) -> Result<(Vec<usize>, Vec<String>)> {
    match explicit {
        Some(cols) => {
            let idx = cols
                .iter()
                .map(|c| header_index(headers, c))
                .collect::<Result<Vec<_>>>()?;
            Ok((idx, cols.to_vec()))
        }
        None => {
            let idx: Vec<usize> = (0..headers.len()).filter(|i| !exclude.contains(i)).collect();
            let names = idx.iter().map(|&i| headers[i].to_string()).collect();
            Ok((idx, names))
        }
    }
}

pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<ExperimentDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let gcol = header_index(&headers, &schema.group_column)?;
    let ycol = header_index(&headers, &schema.outcome_column)?;
    let (fidx, names) = feature_indices(&headers, schema.feature_columns.as_deref(), &[gcol, ycol])?;
    if fidx.is_empty() {
        return Err(Error::Schema("no feature columns".into()));
    }

    let mut data = Vec::new();
    let mut outcome = Vec::new();
    let mut labels = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        let ycell = rec[ycol].trim();
        let y = match ycell {
            "0" | "0.0" => 0.0,
            "1" | "1.0" => 1.0,
            other => {
                return Err(Error::Validation(format!(
                    "row {row}: outcome `{other}` in column `{}` is not 0 or 1",
                    schema.outcome_column
                )))
            }
        };
        let label = rec[gcol].trim();
        if label.is_empty() {
            return Err(Error::Parse {
                row,
                column: schema.group_column.clone(),
                message: "missing group label".into(),
            });
        }
        for (&j, name) in fidx.iter().zip(&names) {
            data.push(parse_feature(&rec[j], row, name)?);
        }
        outcome.push(y);
        labels.push(label.to_string());
    }
    if outcome.is_empty() {
        return Err(Error::Validation("no data rows".into()));
    }

    let distinct: Vec<String> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let groups = GroupTable::new(&distinct, schema.control_label.as_deref())?;
    let assignment = labels.iter().map(|l| groups.index_of(l).unwrap()).collect();
    let features = Matrix::new(outcome.len(), fidx.len(), data)?;
    ExperimentDataset::new(features, names, outcome, assignment, groups)
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<ExperimentDataset> {
    let f = std::fs::File::open(path.as_ref())?;
    read_csv(std::io::BufReader::new(f), schema)
}

/// Reads only the named feature columns (extra columns are ignored).
pub fn read_features_csv<R: Read>(reader: R, feature_columns: &[String]) -> Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let (fidx, names) = feature_indices(&headers, Some(feature_columns), &[])?;
    let mut data = Vec::new();
    let mut rows = 0;
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (&j, name) in fidx.iter().zip(&names) {
            data.push(parse_feature(&rec[j], r + 1, name)?);
        }
        rows += 1;
    }
    Matrix::new(rows, fidx.len(), data)
}

/// Writes `group,y,<features...>` with group labels.
pub fn write_csv<W: Write>(ds: &ExperimentDataset, writer: W, schema: &CsvSchema) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![schema.group_column.clone(), schema.outcome_column.clone()];
    header.extend(ds.feature_names().iter().cloned());
    w.write_record(&header)?;
    let mut rec = Vec::with_capacity(header.len());
    for i in 0..ds.len() {
        rec.clear();
        rec.push(ds.groups().label(ds.assignment()[i]).to_string());
        rec.push(format!("{}", ds.outcome()[i] as u8));
        rec.extend(ds.features().row(i).iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
