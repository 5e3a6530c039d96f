//! `cmix`: fit, evaluate and simulate censored mixture models from the shell.
//!
//! Exit status is 0 on success, 2 for invalid input or flag combinations and
//! 3 when the numerical machinery fails.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use cmix_core::sim::{ModelKind, Scenario, TestSet};
use cmix_core::Parameterization;

#[derive(Debug, Parser)]
#[command(name = "cmix", version, about = "Penalized mixture models for right-censored durations")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model at a fixed penalty or with cross-validation.
    Fit(FitArgs),
    /// Score new subjects with a fitted model.
    Predict(PredictArgs),
    /// Cross-validate the penalty strength.
    Cv(CvArgs),
    /// IPCW C-index and AUC(t) of risk scores.
    Metrics(MetricsArgs),
    /// Draw synthetic data and run Monte Carlo benchmarks.
    Simulate(SimulateArgs),
    /// Rank covariates by univariate Cox concordance.
    Screen(ScreenArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ParamArg {
    Geometric,
    Weibull,
}

impl From<ParamArg> for Parameterization {
    fn from(p: ParamArg) -> Self {
        match p {
            ParamArg::Geometric => Parameterization::Geometric,
            ParamArg::Weibull => Parameterization::Weibull,
        }
    }
}

/// Model options shared by `fit` and `cv`.
#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Training data CSV with columns y, delta and the covariates.
    #[arg(long)]
    pub input: PathBuf,
    /// Elastic-Net mixing: weight of the ridge part.
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    #[arg(long, value_enum, default_value_t = ParamArg::Geometric)]
    pub parameterization: ParamArg,
    /// Fit the CURE model (class 0 never fails).
    #[arg(long)]
    pub cure: bool,
    /// Number of latent classes.
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct CvOptions {
    #[arg(long)]
    pub folds: Option<usize>,
    /// Number of grid points between gamma_max * 1e-4 and gamma_max.
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Follow-up horizon of the validation C-index (default: 95th percentile of y).
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Penalty strength; excludes --cv.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Choose the penalty by cross-validation; excludes --gamma.
    #[arg(long)]
    pub cv: bool,
    #[command(flatten)]
    pub cv_options: CvOptions,
    /// Where to write the model JSON.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Covariate CSV; y and delta columns are ignored if present.
    #[arg(long)]
    pub input: PathBuf,
    /// Also predict survival at this horizon.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Scores CSV (standard output when omitted).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub cv_options: CvOptions,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Data CSV providing y and delta.
    #[arg(long)]
    pub input: PathBuf,
    /// CSV with a `score` column, one row per subject.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Times for AUC(t), comma separated (default: event-time quantiles).
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<f64>>,
    /// Also report the AUC of predicted survival at this horizon (needs --survival).
    #[arg(long, requires = "survival")]
    pub epsilon: Option<f64>,
    /// CSV with a `survival` column, as written by `predict --epsilon`.
    #[arg(long, requires = "epsilon")]
    pub survival: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    Cmix,
    Cure,
    Cox,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Cmix => Scenario::Cmix,
            ScenarioArg::Cure => Scenario::Cure,
            ScenarioArg::Cox => Scenario::Cox,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    CmixGeometric,
    CmixWeibull,
    Cure,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::CmixGeometric => ModelKind::CmixGeometric,
            ModelArg::CmixWeibull => ModelKind::CmixWeibull,
            ModelArg::Cure => ModelKind::Cure,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestSetArg {
    Fresh,
    Split70,
}

impl From<TestSetArg> for TestSet {
    fn from(t: TestSetArg) -> Self {
        match t {
            TestSetArg::Fresh => TestSet::Fresh,
            TestSetArg::Split70 => TestSet::Split70,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML scenario file; flags below override its values.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub scenario: Option<ScenarioArg>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub pi0: Option<f64>,
    #[arg(long)]
    pub gap: Option<f64>,
    #[arg(long)]
    pub r_cf: Option<f64>,
    #[arg(long)]
    pub r_c: Option<f64>,
    #[arg(long)]
    pub alpha0: Option<f64>,
    #[arg(long)]
    pub alpha1: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write one dataset drawn from the spec to this CSV.
    #[arg(long)]
    pub dataset_out: Option<PathBuf>,
    /// Number of benchmark replicates (0 skips the benchmark).
    #[arg(long, default_value_t = 0)]
    pub replicates: usize,
    /// Models to compare, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "cmix-geometric")]
    pub models: Vec<ModelArg>,
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    /// Fit every replicate at this penalty instead of cross-validating.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long, value_enum, default_value_t = TestSetArg::Fresh)]
    pub test_set: TestSetArg,
    /// Times for AUC(t) curves, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub auc_times: Option<Vec<f64>>,
    /// Benchmark report JSON (standard output when omitted).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Per-replicate rows as CSV.
    #[arg(long)]
    pub replicates_csv: Option<PathBuf>,
    /// AUC(t) mean and sd per model as CSV.
    #[arg(long, requires = "auc_times")]
    pub auc_csv: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScreenArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Number of columns to keep.
    #[arg(long)]
    pub top: usize,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Write the data restricted to the kept columns to this CSV.
    #[arg(long)]
    pub dataset_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
