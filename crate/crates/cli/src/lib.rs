//! Command-line front end: generate synthetic data, train, score and
//! evaluate uplift models.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod error;
pub mod modelfile;

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "uplift", version, about = "Multi-treatment uplift modeling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic experiment CSV and its ground-truth sidecar.
    Generate(GenerateArgs),
    /// Fit a model on a labeled experiment CSV and write a model file.
    Train(TrainArgs),
    /// Score a feature CSV with a model file.
    Predict(PredictArgs),
    /// Uplift curve, AUUC and policy report on a labeled CSV.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML file with default values for any flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Label of the control group (default `control`).
    #[arg(long)]
    pub control_label: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ColumnArgs {
    /// Column holding group labels (default `group`).
    #[arg(long)]
    pub group_column: Option<String>,
    /// Column holding the binary outcome (default `y`).
    #[arg(long)]
    pub outcome_column: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Dataset CSV; the truth sidecar goes to `<stem>.truth.csv`.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Comma-separated `label:lift:neg_lift` entries.
    #[arg(long)]
    pub groups: Option<String>,
    /// Rows per group.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub base_rate: Option<f64>,
    #[arg(long)]
    pub informative: Option<usize>,
    #[arg(long)]
    pub uplift: Option<usize>,
    #[arg(long)]
    pub mix: Option<usize>,
    #[arg(long)]
    pub irrelevant: Option<usize>,
    #[arg(long)]
    pub uplift_per_group: Option<usize>,
    /// Spread of the baseline conversion across units.
    #[arg(long)]
    pub baseline_scale: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct LearnerArgs {
    /// `forest` or `mean`.
    #[arg(long)]
    pub learner: Option<String>,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub max_features: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_samples_leaf: Option<usize>,
    #[arg(long)]
    pub no_bootstrap: bool,
    /// Cross-fitting folds for the R-Learner.
    #[arg(long)]
    pub folds: Option<usize>,
    /// `empirical` or `learned`.
    #[arg(long)]
    pub propensity: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub columns: ColumnArgs,
    #[command(flatten)]
    pub learner: LearnerArgs,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Model file to write.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// `two_model`, `x_learner` or `r_learner`.
    #[arg(long)]
    pub model: Option<String>,
    /// `conversion` or `net_value`.
    #[arg(long)]
    pub objective: Option<String>,
    /// Cost file (TOML).
    #[arg(long)]
    pub cost: Option<PathBuf>,
    /// Train every kind on a validation split and keep the best.
    #[arg(long)]
    pub select: bool,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    /// Uplift-curve bins for selection.
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Scores CSV to write.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Keep only this top fraction of rows by recommended score.
    #[arg(long)]
    pub top_fraction: Option<f64>,
    /// Recommend control when every arm's score is negative.
    #[arg(long)]
    pub include_control: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub columns: ColumnArgs,
    /// Model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output prefix: writes `<prefix>.curve.csv`, `<prefix>.report.txt`
    /// and `<prefix>.report.json`.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Cost file for a net-value report (defaults to the model's costs).
    #[arg(long)]
    pub cost: Option<PathBuf>,
    #[arg(long)]
    pub include_control: bool,
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Train(a) => commands::train(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
    }
}
