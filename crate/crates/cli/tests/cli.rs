use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use uplift::dataset::read_features_csv;
use uplift_cli::modelfile::{ModelFile, StoredModel};

const FOREST: &[&str] = &["--trees", "8", "--max-depth", "4", "--min-samples-leaf", "10", "--max-features", "5"];

fn uplift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uplift"))
        .args(args)
        .output()
        .expect("spawn uplift")
}

fn ok(args: &[&str]) -> String {
    let out = uplift(args);
    assert!(
        out.status.success(),
        "uplift {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> (i32, String) {
    let out = uplift(args);
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

struct Work {
    dir: TempDir,
}

impl Work {
    fn new() -> Self {
        Self { dir: TempDir::new().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let path = self.path(name);
        std::fs::write(&path, text).unwrap();
        path
    }

    fn generate(&self, name: &str, groups: &str, n: &str) -> PathBuf {
        let out = self.path(name);
        ok(&["generate", "--output", p(&out), "--groups", groups, "--n", n, "--seed", "7"]);
        out
    }

    fn train(&self, data: &Path, name: &str, extra: &[&str]) -> PathBuf {
        let out = self.path(name);
        let mut args = vec!["train", "--input", p(data), "--output", p(&out), "--seed", "3"];
        args.extend_from_slice(FOREST);
        args.extend_from_slice(extra);
        ok(&args);
        out
    }
}

fn report_value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in report:\n{text}"))
        .parse()
        .unwrap()
}

const TINY: &str = "group,y,x\ncontrol,0,0\ncontrol,1,0\ncontrol,0,1\ncontrol,0,1\nt1,1,0\nt1,1,0\nt1,0,1\nt1,0,1\n";

#[test]
fn generate_is_deterministic_and_writes_truth() {
    let w = Work::new();
    let a = w.generate("a.csv", "control:0:0,t1:0.2:0.1", "200");
    let b = w.generate("b.csv", "control:0:0,t1:0.2:0.1", "200");
    assert_eq!(read(&a), read(&b));
    assert_eq!(read(&w.path("a.truth.csv")), read(&w.path("b.truth.csv")));
    let text = String::from_utf8(read(&a)).unwrap();
    assert_eq!(text.lines().count(), 401);
    assert!(text.starts_with("group,y,inf0"));
}

#[test]
fn invalid_lift_exits_2_naming_group() {
    let w = Work::new();
    let out = w.path("bad.csv");
    let (c, err) = code(&["generate", "--output", p(&out), "--groups", "control:0:0,promo:0.8:0.5"]);
    assert_eq!(c, 2);
    assert!(err.contains("promo"), "{err}");
    assert!(!out.exists());
}

#[test]
fn exit_codes() {
    let w = Work::new();
    let missing = w.path("missing.csv");
    let model = w.path("m.json");
    assert_eq!(code(&["train", "--input", p(&missing), "--output", p(&model)]).0, 1);
    assert_eq!(code(&["frobnicate"]).0, 2);
    assert_eq!(code(&["train", "--trees", "many"]).0, 2);
    let bad = w.write("bad.csv", "group,y,x\ncontrol,0,1\nt1,2,1\n");
    assert_eq!(code(&["train", "--input", p(&bad), "--output", p(&model)]).0, 2);
    let tiny = w.write("tiny.csv", TINY);
    assert_eq!(code(&["train", "--input", p(&tiny), "--output", p(&model), "--model", "s_learner"]).0, 2);
    assert_eq!(code(&["--help"]).0, 0);
}

#[test]
fn net_value_without_cost_is_a_usage_error() {
    let w = Work::new();
    let tiny = w.write("tiny.csv", TINY);
    let model = w.path("m.json");
    let (c, err) = code(&["train", "--input", p(&tiny), "--output", p(&model), "--objective", "net_value"]);
    assert_eq!(c, 2);
    assert!(err.contains("cost"), "{err}");
}

#[test]
fn newer_model_format_is_rejected() {
    let w = Work::new();
    let tiny = w.write("tiny.csv", TINY);
    let model = w.write("future.json", "{\"format_version\": 99}");
    let out = w.path("s.csv");
    let (c, err) = code(&["predict", "--model", p(&model), "--input", p(&tiny), "--output", p(&out)]);
    assert_eq!(c, 2);
    assert!(err.contains("newer"), "{err}");
}

#[test]
fn tiny_set_auuc_through_files() {
    let w = Work::new();
    let tiny = w.write("tiny.csv", TINY);
    let model = w.path("tiny.json");
    ok(&[
        "train", "--input", p(&tiny), "--output", p(&model), "--model", "two_model", "--trees", "1",
        "--max-depth", "1", "--min-samples-leaf", "1", "--max-features", "1", "--no-bootstrap",
    ]);
    let prefix = w.path("tiny");
    let text = ok(&["evaluate", "--model", p(&model), "--input", p(&tiny), "--output", p(&prefix), "--bins", "2"]);
    assert!((report_value(&text, "auuc") - 0.25).abs() < 1e-12, "{text}");
    let curve = String::from_utf8(read(&w.path("tiny.curve.csv"))).unwrap();
    assert_eq!(curve.lines().count(), 3, "{curve}");
    assert!(w.path("tiny.report.json").exists());
}

#[test]
fn train_predict_evaluate_are_deterministic() {
    let w = Work::new();
    let data = w.generate("d.csv", "control:0:0,t1:0.2:0.05,t2:0.1:0", "300");
    for model in ["two_model", "x_learner", "r_learner"] {
        let a = w.train(&data, &format!("{model}_a.json"), &["--model", model]);
        let b = w.train(&data, &format!("{model}_b.json"), &["--model", model]);
        assert_eq!(read(&a), read(&b), "{model} model file");
        let (sa, sb) = (w.path("sa.csv"), w.path("sb.csv"));
        ok(&["predict", "--model", p(&a), "--input", p(&data), "--output", p(&sa)]);
        ok(&["predict", "--model", p(&b), "--input", p(&data), "--output", p(&sb)]);
        assert_eq!(read(&sa), read(&sb));
        let (ea, eb) = (w.path("ea"), w.path("eb"));
        ok(&["evaluate", "--model", p(&a), "--input", p(&data), "--output", p(&ea)]);
        ok(&["evaluate", "--model", p(&b), "--input", p(&data), "--output", p(&eb)]);
        for suffix in ["curve.csv", "report.txt", "report.json"] {
            assert_eq!(read(&w.path(&format!("ea.{suffix}"))), read(&w.path(&format!("eb.{suffix}"))));
        }
    }
}

#[test]
fn predictions_match_in_process_model() {
    let w = Work::new();
    let data = w.generate("d.csv", "control:0:0,t1:0.2:0.05,t2:0.1:0", "200");
    let model = w.train(&data, "m.json", &["--model", "x_learner"]);
    let scores = w.path("s.csv");
    ok(&["predict", "--model", p(&model), "--input", p(&data), "--output", p(&scores)]);

    let file = ModelFile::load(&model).unwrap();
    let StoredModel::WithControl(m) = &file.model else { panic!("expected a control design") };
    let x = read_features_csv(std::fs::File::open(&data).unwrap(), &file.feature_columns).unwrap();
    let cate = m.predict_cate(&x).unwrap();

    let mut r = csv::Reader::from_path(&scores).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["row_id", "cate_t1", "cate_t2", "recommended", "recommended_score"]);
    let mut n = 0;
    for rec in r.records() {
        let rec = rec.unwrap();
        let i: usize = rec[0].parse().unwrap();
        for c in 0..2 {
            let v: f64 = rec[c + 1].parse().unwrap();
            assert_eq!(v.to_bits(), cate.get(i, c).to_bits());
        }
        n += 1;
    }
    assert_eq!(n, x.rows());

    // save -> load -> save is stable
    let again = w.path("again.json");
    file.save(&again).unwrap();
    assert_eq!(read(&model), read(&again));
}

#[test]
fn top_fraction_keeps_highest_scores() {
    let w = Work::new();
    let data = w.generate("d.csv", "control:0:0,t1:0.2:0.05", "150");
    let model = w.train(&data, "m.json", &[]);
    let scores = w.path("top.csv");
    ok(&["predict", "--model", p(&model), "--input", p(&data), "--output", p(&scores), "--top-fraction", "0.1"]);
    let mut r = csv::Reader::from_path(&scores).unwrap();
    let vals: Vec<f64> = r.records().map(|rec| rec.unwrap()[3].parse().unwrap()).collect();
    assert_eq!(vals.len(), 30);
    assert!(vals.windows(2).all(|w| w[0] >= w[1]));

    let all = w.path("all.csv");
    ok(&["predict", "--model", p(&model), "--input", p(&data), "--output", p(&all)]);
    let mut r = csv::Reader::from_path(&all).unwrap();
    let mut every: Vec<f64> = r.records().map(|rec| rec.unwrap()[3].parse().unwrap()).collect();
    every.sort_by(|a, b| b.total_cmp(a));
    assert_eq!(vals, every[..30]);

    assert_eq!(code(&["predict", "--model", p(&model), "--input", p(&data), "--output", p(&all), "--top-fraction", "0"]).0, 2);
}

#[test]
fn select_reports_every_kind() {
    let w = Work::new();
    let data = w.generate("d.csv", "control:0:0,t1:0.2:0.05", "300");
    let out = w.path("m.json");
    let mut args = vec!["train", "--input", p(&data), "--output", p(&out), "--select"];
    args.extend_from_slice(FOREST);
    let text = ok(&args);
    let scores: Vec<&str> = text.lines().filter(|l| l.starts_with("validation_score_")).collect();
    assert_eq!(scores.len(), 3, "{text}");
    let selected = text.lines().find_map(|l| l.strip_prefix("selected=")).unwrap();
    let best = scores
        .iter()
        .map(|l| {
            let (k, v) = l.trim_start_matches("validation_score_").split_once('=').unwrap();
            (k, v.parse::<f64>().unwrap())
        })
        .fold(("", f64::NEG_INFINITY), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
    assert_eq!(selected, best.0);
    let file = ModelFile::load(&out).unwrap();
    assert_eq!(file.metadata.selection.len(), 3);
    assert_eq!(file.metadata.spec.kind.name(), selected);
}

#[test]
fn zero_cost_net_value_report_matches_conversion() {
    let w = Work::new();
    let data = w.generate("d.csv", "control:0:0,t1:0.2:0.05,t2:0.1:0", "300");
    let cost = w.write(
        "zero.toml",
        "conversion_value = 1.0\n[[group]]\nlabel = \"t1\"\nimpression_cost = 0.0\ntriggered_cost = 0.0\n\
         [[group]]\nlabel = \"t2\"\nimpression_cost = 0.0\ntriggered_cost = 0.0\n",
    );
    for model in ["two_model", "x_learner", "r_learner"] {
        let conv = w.train(&data, "conv.json", &["--model", model]);
        let nv = w.train(&data, "nv.json", &["--model", model, "--objective", "net_value", "--cost", p(&cost)]);
        let a = ok(&["evaluate", "--model", p(&conv), "--input", p(&data), "--output", p(&w.path("conv"))]);
        let b = ok(&["evaluate", "--model", p(&nv), "--input", p(&data), "--output", p(&w.path("nv"))]);
        for key in ["auuc", "matched_mean", "unmatched_mean", "difference", "n", "matched_n"] {
            let (x, y) = (report_value(&a, key), report_value(&b, key));
            assert!((x - y).abs() <= 1e-9, "{model} {key}: {x} vs {y}");
        }
    }
}

#[test]
fn no_control_design_uses_majority_vote() {
    let w = Work::new();
    let out = w.path("nc.csv");
    ok(&[
        "generate", "--output", p(&out), "--groups", "a:0.1:0.05,b:0.2:0.05,c:0.1:0", "--n", "200",
        "--control-label", "none", "--seed", "5",
    ]);
    let model = w.train(&out, "nc.json", &["--control-label", "none"]);
    let file = ModelFile::load(&model).unwrap();
    assert!(matches!(file.model, StoredModel::NoControl(_)));
    let scores = w.path("s.csv");
    ok(&["predict", "--model", p(&model), "--input", p(&out), "--output", p(&scores)]);
    let mut r = csv::Reader::from_path(&scores).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["row_id", "cate_b_vs_a", "cate_c_vs_a", "cate_c_vs_b", "recommended", "recommended_score"]);
    for rec in r.records() {
        let votes: f64 = rec.unwrap()[5].parse().unwrap();
        assert!((1.0..=2.0).contains(&votes));
    }
    let text = ok(&["evaluate", "--model", p(&model), "--input", p(&out), "--output", p(&w.path("nc"))]);
    assert!(text.contains("difference="), "{text}");
    assert!(!w.path("nc.curve.csv").exists());
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let w = Work::new();
    w.write("cfg.toml", "output = \"fromcfg.csv\"\nn = 50\nseed = 4\ngroups = \"control:0:0,t1:0.1:0\"\n");
    ok(&["generate", "--config", p(&w.path("cfg.toml"))]);
    let text = String::from_utf8(read(&w.path("fromcfg.csv"))).unwrap();
    assert_eq!(text.lines().count(), 101);
    ok(&["generate", "--config", p(&w.path("cfg.toml")), "--n", "20"]);
    let text = String::from_utf8(read(&w.path("fromcfg.csv"))).unwrap();
    assert_eq!(text.lines().count(), 41);
    w.write("typo.toml", "trees_typo = 3\n");
    assert_eq!(code(&["generate", "--config", p(&w.path("typo.toml"))]).0, 2);
}
