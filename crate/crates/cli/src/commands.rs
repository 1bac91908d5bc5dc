use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::Serialize;
use uplift::baselearn::{BaseLearner, ForestParams};
use uplift::datagen::{generate as generate_data, GenSpec, GroupLift};
use uplift::dataset::{
    read_csv, read_features_csv, stratified_split, write_csv, CostStructure, CsvSchema, ExperimentDataset, SplitSpec,
    DEFAULT_CONTROL_LABEL, DEFAULT_GROUP_COLUMN, DEFAULT_OUTCOME_COLUMN,
};
use uplift::eval::{
    evaluate_policy, majority_vote_recommend, uplift_curve_multi_arm, PolicyReport, UpliftCurve, DEFAULT_BINS,
};
use uplift::metalearn::{
    best_arm, fit_pairwise, recommend_from_cate, ModelKind, ModelSpec, Objective, PairwiseModel, PropensityMode,
    UpliftModel,
};
use uplift::Matrix;

use crate::config::{CostFile, FileConfig};
use crate::error::{CliError, CliResult};
use crate::modelfile::{fingerprint, write_atomic, ModelFile, StoredModel, TrainingMetadata, FORMAT_VERSION};
use crate::{ColumnArgs, CommonArgs, EvaluateArgs, GenerateArgs, LearnerArgs, PredictArgs, TrainArgs};

const DEFAULT_VALIDATION_FRACTION: f64 = 0.3;

fn required<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::Usage(format!("missing required --{flag}")))
}

fn parse<T: std::str::FromStr<Err = uplift::Error>>(s: &str) -> CliResult<T> {
    s.parse().map_err(|e: uplift::Error| CliError::Usage(e.to_string()))
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

fn control_label(common: &CommonArgs, cfg: &FileConfig) -> String {
    common
        .control_label
        .clone()
        .or_else(|| cfg.control_label.clone())
        .unwrap_or_else(|| DEFAULT_CONTROL_LABEL.to_string())
}

fn schema(columns: &ColumnArgs, cfg: &FileConfig, control: String) -> CsvSchema {
    CsvSchema {
        group_column: columns
            .group_column
            .clone()
            .or_else(|| cfg.group_column.clone())
            .unwrap_or_else(|| DEFAULT_GROUP_COLUMN.into()),
        outcome_column: columns
            .outcome_column
            .clone()
            .or_else(|| cfg.outcome_column.clone())
            .unwrap_or_else(|| DEFAULT_OUTCOME_COLUMN.into()),
        feature_columns: None,
        control_label: Some(control),
    }
}

/// `<dir>/<stem>.<suffix>` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// `<path>.<suffix>`, keeping any extension already on `path`.
fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn csv_bytes<F>(write: F) -> CliResult<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> uplift::Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

// ---------------------------------------------------------------------------
// generate

/// Parses `label:lift:neg_lift,...`; missing lifts default to 0.
pub fn parse_groups(text: &str) -> CliResult<Vec<GroupLift>> {
    text.split(',')
        .map(|entry| {
            let parts: Vec<&str> = entry.trim().split(':').collect();
            if parts.is_empty() || parts[0].is_empty() || parts.len() > 3 {
                return Err(CliError::Usage(format!("bad group entry `{entry}`, expected label:lift:neg_lift")));
            }
            let num = |i: usize| -> CliResult<f64> {
                parts.get(i).map_or(Ok(0.0), |p| {
                    p.parse()
                        .map_err(|_| CliError::Usage(format!("group `{}`: `{p}` is not a number", parts[0])))
                })
            };
            Ok(GroupLift::new(parts[0], num(1)?, num(2)?))
        })
        .collect()
}

pub fn generate(args: &GenerateArgs) -> CliResult<()> {
    let cfg = FileConfig::load_optional(args.common.config.as_deref())?;
    let defaults = GenSpec::default();
    let groups = match args.groups.clone().or_else(|| cfg.groups.clone()) {
        Some(g) => parse_groups(&g)?,
        None => defaults.groups.clone(),
    };
    let spec = GenSpec {
        n_per_group: args.n.or(cfg.n).unwrap_or(defaults.n_per_group),
        groups,
        control_label: Some(control_label(&args.common, &cfg)),
        base_rate: args.base_rate.or(cfg.base_rate).unwrap_or(defaults.base_rate),
        n_informative: args.informative.or(cfg.informative).unwrap_or(defaults.n_informative),
        n_uplift: args.uplift.or(cfg.uplift).unwrap_or(defaults.n_uplift),
        n_mix: args.mix.or(cfg.mix).unwrap_or(defaults.n_mix),
        n_irrelevant: args.irrelevant.or(cfg.irrelevant).unwrap_or(defaults.n_irrelevant),
        uplift_per_group: args
            .uplift_per_group
            .or(cfg.uplift_per_group)
            .unwrap_or(defaults.uplift_per_group),
        baseline_scale: args
            .baseline_scale
            .or(cfg.baseline_scale)
            .unwrap_or(defaults.baseline_scale),
        seed: args.common.seed.or(cfg.seed).unwrap_or(defaults.seed),
    };
    let output = args
        .output
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("synthetic.csv"));
    let data = generate_data(&spec)?;
    let ds = &data.dataset;
    let schema = CsvSchema::default();
    write_atomic(&output, &csv_bytes(|b| write_csv(ds, b, &schema))?)?;
    let truth = sibling(&output, "truth.csv");
    write_atomic(&truth, &csv_bytes(|b| data.write_truth_csv(b))?)?;

    println!("n={}", ds.len());
    println!("d={}", ds.n_features());
    for (g, c) in ds.group_counts().iter().enumerate() {
        println!("count_{}={c}", ds.groups().label(g));
    }
    println!("dataset={}", output.display());
    println!("truth={}", truth.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// train

fn learner(args: &LearnerArgs, cfg: &FileConfig, seed: u64) -> CliResult<BaseLearner> {
    match args.learner.as_deref().or(cfg.learner.as_deref()).unwrap_or("forest") {
        "mean" => Ok(BaseLearner::Mean),
        "forest" => {
            let d = ForestParams::default();
            let params = ForestParams {
                n_trees: args.trees.or(cfg.trees).unwrap_or(d.n_trees),
                max_features: args.max_features.or(cfg.max_features).unwrap_or(d.max_features),
                max_depth: args.max_depth.or(cfg.max_depth).unwrap_or(d.max_depth),
                min_samples_leaf: args.min_samples_leaf.or(cfg.min_samples_leaf).unwrap_or(d.min_samples_leaf),
                seed,
                bootstrap: !args.no_bootstrap && cfg.bootstrap.unwrap_or(d.bootstrap),
            };
            params.validate()?;
            Ok(BaseLearner::Forest(params))
        }
        other => Err(CliError::Usage(format!("unknown learner `{other}`, expected forest or mean"))),
    }
}

enum Fitted {
    Uplift(UpliftModel),
    Pairwise(PairwiseModel),
}

impl Fitted {
    fn stored(self) -> StoredModel {
        match self {
            Self::Uplift(m) => StoredModel::WithControl(m),
            Self::Pairwise(m) => StoredModel::NoControl(m),
        }
    }
}

fn fit(spec: &ModelSpec, train: &ExperimentDataset) -> CliResult<Fitted> {
    Ok(if train.has_control() {
        Fitted::Uplift(spec.fit(train)?)
    } else {
        Fitted::Pairwise(fit_pairwise(train, spec)?)
    })
}

/// Validation score used for model selection: AUUC with a control group,
/// otherwise the mean (net) value among recommendation-matched rows.
fn validation_score(model: &Fitted, valid: &ExperimentDataset, bins: usize, cost: Option<&CostStructure>, seed: u64) -> CliResult<f64> {
    match model {
        Fitted::Uplift(m) => {
            if m.objective == Objective::NetValue {
                let rec = m.recommend(valid.features(), true)?;
                return Ok(evaluate_policy(&rec, valid, cost)?.matched_mean);
            }
            let cate = m.predict_cate(valid.features())?;
            let rec = recommend_from_cate(&cate, &m.arm_groups, Some(m.control()), false);
            Ok(uplift_curve_multi_arm(&cate, &rec, valid, bins)?.auuc)
        }
        Fitted::Pairwise(m) => {
            let rec = majority_vote_recommend(&m.predict(valid.features())?, seed)?;
            Ok(evaluate_policy(&rec, valid, cost)?.matched_mean)
        }
    }
}

pub fn train(args: &TrainArgs) -> CliResult<()> {
    let cfg = FileConfig::load_optional(args.common.config.as_deref())?;
    let input = required(args.input.clone().or_else(|| cfg.input.clone()), "input")?;
    let output = required(args.output.clone().or_else(|| cfg.output.clone()), "output")?;
    let seed = args.common.seed.or(cfg.seed).unwrap_or(0);
    let objective: Objective = parse(args.objective.as_deref().or(cfg.objective.as_deref()).unwrap_or("conversion"))?;
    let kind: ModelKind = parse(args.model.as_deref().or(cfg.model.as_deref()).unwrap_or("x_learner"))?;
    let propensity: PropensityMode = parse(args.learner.propensity.as_deref().or(cfg.propensity.as_deref()).unwrap_or("empirical"))?;
    let cost_path = args.cost.clone().or_else(|| cfg.cost.clone());
    if objective == Objective::NetValue && cost_path.is_none() {
        return Err(CliError::Usage("objective net_value requires --cost".into()));
    }
    let base = learner(&args.learner, &cfg, seed)?;

    let schema = schema(&args.columns, &cfg, control_label(&args.common, &cfg));
    let ds = read_csv(open(&input)?, &schema)?;
    let cost = cost_path
        .as_deref()
        .map(|p| CostFile::load(p)?.resolve(ds.groups()))
        .transpose()?;

    let mut spec = ModelSpec::new(kind, base);
    spec.propensity = propensity;
    spec.k_folds = args.learner.folds.or(cfg.folds).unwrap_or(spec.k_folds);
    if objective == Objective::NetValue {
        spec = spec.net_value(cost.clone().expect("checked above"));
    }

    let mut selection = Vec::new();
    let select = args.select || cfg.select.unwrap_or(false);
    if select {
        let fraction = args
            .validation_fraction
            .or(cfg.validation_fraction)
            .unwrap_or(DEFAULT_VALIDATION_FRACTION);
        let bins = args.bins.or(cfg.bins).unwrap_or(DEFAULT_BINS);
        let (fit_part, valid) = stratified_split(&ds, SplitSpec { test_fraction: fraction, seed })?;
        for k in ModelKind::ALL {
            let candidate = ModelSpec { kind: k, ..spec.clone() };
            let model = fit(&candidate, &fit_part)?;
            let score = validation_score(&model, &valid, bins, spec.cost.as_ref(), seed)?;
            println!("validation_score_{}={score}", k.name());
            selection.push((k.name().to_string(), score));
        }
        let (best, _) = selection
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, (_, s))| if *s > acc.1 { (i, *s) } else { acc });
        spec.kind = ModelKind::ALL[best];
        println!("selected={}", spec.kind.name());
    }

    let model = fit(&spec, &ds)?;
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        feature_columns: ds.feature_names().to_vec(),
        model: model.stored(),
        metadata: TrainingMetadata {
            seed,
            spec: spec.clone(),
            n_rows: ds.len(),
            data_fingerprint: fingerprint(&ds),
            selection,
        },
    };
    file.save(&output)?;
    println!("model={}", spec.kind.name());
    println!("design={}", if ds.has_control() { "with_control" } else { "no_control" });
    println!("output={}", output.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// predict

/// Per-row scores in the scores CSV layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    pub columns: Vec<String>,
    pub values: Matrix,
    pub recommended: Vec<usize>,
    pub recommended_score: Vec<f64>,
}

/// CATE columns per arm; for no-control models, one column per pair with
/// the vote count as the recommended score.
pub fn score(file: &ModelFile, x: &Matrix, include_control: bool, seed: u64) -> CliResult<Scores> {
    match &file.model {
        StoredModel::WithControl(m) => {
            let cate = m.predict_cate(x)?;
            let recommended = recommend_from_cate(&cate, &m.arm_groups, Some(m.control()), include_control);
            let recommended_score = recommended
                .iter()
                .enumerate()
                .map(|(i, &g)| m.arm_groups.iter().position(|&a| a == g).map_or(0.0, |c| cate.get(i, c)))
                .collect();
            Ok(Scores {
                columns: m.arm_groups.iter().map(|&g| format!("cate_{}", m.groups.label(g))).collect(),
                values: cate,
                recommended,
                recommended_score,
            })
        }
        StoredModel::NoControl(m) => {
            let pc = m.predict(x)?;
            let recommended = majority_vote_recommend(&pc, seed)?;
            let n = x.rows();
            let mut values = Matrix::zeros(n, pc.pairs.len());
            let mut votes = vec![0.0; n];
            for (p, &(a, b)) in pc.pairs.iter().enumerate() {
                for i in 0..n {
                    let c = pc.cates[p][i];
                    values.set(i, p, c);
                    let winner = if c > 0.0 { b } else { a };
                    if winner == recommended[i] {
                        votes[i] += 1.0;
                    }
                }
            }
            Ok(Scores {
                columns: pc
                    .pairs
                    .iter()
                    .map(|&(a, b)| format!("cate_{}_vs_{}", m.groups.label(b), m.groups.label(a)))
                    .collect(),
                values,
                recommended,
                recommended_score: votes,
            })
        }
    }
}

fn groups_of(file: &ModelFile) -> &uplift::dataset::GroupTable {
    match &file.model {
        StoredModel::WithControl(m) => &m.groups,
        StoredModel::NoControl(m) => &m.groups,
    }
}

pub fn predict(args: &PredictArgs) -> CliResult<()> {
    let cfg = FileConfig::load_optional(args.common.config.as_deref())?;
    let model_path = required(args.model.clone().or_else(|| cfg.model_path(args.common.config.as_deref())), "model")?;
    let input = required(args.input.clone().or_else(|| cfg.input.clone()), "input")?;
    let output = required(args.output.clone().or_else(|| cfg.output.clone()), "output")?;
    let include_control = args.include_control || cfg.include_control.unwrap_or(false);
    let top = args.top_fraction.or(cfg.top_fraction);
    if let Some(q) = top {
        if !(q > 0.0 && q <= 1.0) {
            return Err(CliError::Usage(format!("--top-fraction must be in (0, 1], got {q}")));
        }
    }

    let file = ModelFile::load(&model_path)?;
    let seed = args.common.seed.or(cfg.seed).unwrap_or(file.metadata.seed);
    let x = read_features_csv(open(&input)?, &file.feature_columns)?;
    let scores = score(&file, &x, include_control, seed)?;

    let mut rows: Vec<usize> = (0..x.rows()).collect();
    if let Some(q) = top {
        rows.sort_by(|&a, &b| scores.recommended_score[b].total_cmp(&scores.recommended_score[a]));
        rows.truncate((q * x.rows() as f64).ceil() as usize);
    }
    let groups = groups_of(&file);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["row_id".to_string()];
    header.extend(scores.columns.iter().cloned());
    header.push("recommended".into());
    header.push("recommended_score".into());
    w.write_record(&header).map_err(uplift::Error::from)?;
    for &i in &rows {
        let mut rec = vec![i.to_string()];
        rec.extend(scores.values.row(i).iter().map(f64::to_string));
        rec.push(groups.label(scores.recommended[i]).to_string());
        rec.push(scores.recommended_score[i].to_string());
        w.write_record(&rec).map_err(uplift::Error::from)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?;
    write_atomic(&output, &bytes)?;
    println!("rows={}", rows.len());
    println!("output={}", output.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate

#[derive(Debug, Serialize)]
pub struct EvaluationReport {
    pub model: String,
    pub auuc: Option<f64>,
    pub curve: Option<UpliftCurve>,
    pub policy: PolicyReport,
}

impl EvaluationReport {
    pub fn to_text(&self) -> String {
        let mut s = format!("model={}\n", self.model);
        if let (Some(a), Some(c)) = (self.auuc, &self.curve) {
            s.push_str(&format!("auuc={a}\n"));
            s.push_str(&format!("bins={}\n", c.n_bins));
            s.push_str(&format!("flagged_bins={}\n", c.points.iter().filter(|p| p.flagged).count()));
        }
        s.push_str(&self.policy.to_text());
        s
    }
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let cfg = FileConfig::load_optional(args.common.config.as_deref())?;
    let model_path = required(args.model.clone().or_else(|| cfg.model_path(args.common.config.as_deref())), "model")?;
    let input = required(args.input.clone().or_else(|| cfg.input.clone()), "input")?;
    let output = required(args.output.clone().or_else(|| cfg.output.clone()), "output")?;
    let bins = args.bins.or(cfg.bins).unwrap_or(DEFAULT_BINS);
    let include_control = args.include_control || cfg.include_control.unwrap_or(false);

    let file = ModelFile::load(&model_path)?;
    let seed = args.common.seed.or(cfg.seed).unwrap_or(file.metadata.seed);
    let groups = groups_of(&file).clone();
    let control = groups.control().map_or_else(|| control_label(&args.common, &cfg), |c| groups.label(c).to_string());
    let mut schema = schema(&args.columns, &cfg, control);
    schema.feature_columns = Some(file.feature_columns.clone());
    let ds = read_csv(open(&input)?, &schema)?.align_groups(&groups)?;

    let cost = match args.cost.clone().or_else(|| cfg.cost.clone()) {
        Some(p) => Some(CostFile::load(&p)?.resolve(&groups)?),
        None => match &file.model {
            StoredModel::WithControl(m) if m.objective == Objective::NetValue => m.cost.clone(),
            _ => file.metadata.spec.cost.clone().filter(|_| file.metadata.spec.objective == Objective::NetValue),
        },
    };

    let report = match &file.model {
        StoredModel::WithControl(m) => {
            let cate = m.predict_cate(ds.features())?;
            let rec = recommend_from_cate(&cate, &m.arm_groups, Some(m.control()), false);
            let curve = uplift_curve_multi_arm(&cate, &rec, &ds, bins)?;
            let policy_rec = if include_control {
                recommend_from_cate(&cate, &m.arm_groups, Some(m.control()), true)
            } else {
                rec
            };
            EvaluationReport {
                model: m.kind.name().into(),
                auuc: Some(curve.auuc),
                policy: evaluate_policy(&policy_rec, &ds, cost.as_ref())?,
                curve: Some(curve),
            }
        }
        StoredModel::NoControl(m) => {
            let rec = majority_vote_recommend(&m.predict(ds.features())?, seed)?;
            EvaluationReport {
                model: file.metadata.spec.kind.name().into(),
                auuc: None,
                curve: None,
                policy: evaluate_policy(&rec, &ds, cost.as_ref())?,
            }
        }
    };

    if let Some(c) = &report.curve {
        write_atomic(&with_suffix(&output, "curve.csv"), c.to_csv().as_bytes())?;
    }
    let text = report.to_text();
    write_atomic(&with_suffix(&output, "report.txt"), text.as_bytes())?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Internal(e.to_string()))?;
    write_atomic(&with_suffix(&output, "report.json"), format!("{json}\n").as_bytes())?;
    print!("{text}");
    Ok(())
}

/// Best-arm score per row, exposed for callers that rank rows themselves.
pub fn best_scores(cate: &Matrix) -> Vec<f64> {
    (0..cate.rows()).map(|i| best_arm(cate.row(i)).1).collect()
}
