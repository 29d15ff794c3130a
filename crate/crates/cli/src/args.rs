use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "survfair", version, about = "Causal decomposition of survival disparities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a cohort from a discrete structural causal model.
    Simulate(SimulateArgs),
    /// Estimate potential-outcome curves and decompose the disparity into
    /// direct, indirect and spurious parts.
    ///
    /// Sign convention: tv = x_de - x_ie - x_se, where x_ie and x_se measure
    /// the reverse transition from x1 back to x0.
    Decompose(DecomposeArgs),
    /// Group-wise survival or incidence curves and their difference.
    Curves(CurvesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Example {
    Icu,
    Readmission,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Non-informative censoring.
    Nic,
    /// Competing risks.
    Cr,
    /// Informative censoring under an assumed copula.
    Ic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Plugin,
    Dr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    Stratified,
    Tree,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Independence,
    Clayton,
    Gumbel,
    Frank,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateArgs {
    /// JSON config; its fields override the flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Spec JSON file.
    #[arg(long, conflicts_with = "example")]
    pub spec: Option<PathBuf>,
    /// Bundled spec.
    #[arg(long, value_enum)]
    pub example: Option<Example>,
    /// Kendall's tau of the event-censoring coupling for `--example readmission`.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Number of rows.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "SURVFAIR_OUT_DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeArgs {
    /// JSON config; its fields override the flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Cohort CSV with header `x,z,w,m,delta` (or `z1..zp`, `w1..wq`).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, env = "SURVFAIR_OUT_DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long, value_enum)]
    pub estimator: Option<Estimator>,
    /// `survival`, `cif:K`, `all_cause_survival`, `rmst:H` or `cumulative_hazard`.
    #[arg(long)]
    pub functional: Option<String>,
    /// Explicit grid times, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Number of event-time quantiles for the grid when `--grid` is absent.
    #[arg(long)]
    pub grid_quantiles: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long, value_enum)]
    pub learner: Option<Learner>,
    #[arg(long, value_enum)]
    pub censoring_learner: Option<Learner>,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub min_leaf: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Propensity clipping level.
    #[arg(long)]
    pub clip: Option<f64>,
    /// Floor on survival and censoring probabilities inside the influence function.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, value_enum)]
    pub copula: Option<Family>,
    /// Kendall's tau values, comma separated (mode `ic` only).
    #[arg(long, value_delimiter = ',')]
    pub tau: Option<Vec<f64>>,
    /// Sampled trajectories per envelope.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the ratio-scale decomposition.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub ratio: Option<bool>,
    #[arg(long)]
    pub x0: Option<u8>,
    #[arg(long)]
    pub x1: Option<u8>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvesArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, env = "SURVFAIR_OUT_DIR")]
    pub out: Option<PathBuf>,
    /// `survival`, `cif:K` or `all_cause_survival`.
    #[arg(long)]
    pub functional: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
}

/// Overlays the fields present in the JSON file at `path` onto `args`.
pub fn merge_config<T: Serialize + for<'de> Deserialize<'de>>(args: T, path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let file: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    let serde_json::Value::Object(file) = file else {
        return Err(CliError::Usage(format!("config {} must be a JSON object", path.display())));
    };
    let mut base = serde_json::to_value(args).map_err(|e| CliError::Usage(e.to_string()))?;
    let obj = base.as_object_mut().expect("args serialize to an object");
    for (k, v) in file {
        obj.insert(k, v);
    }
    serde_json::from_value(base).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}
