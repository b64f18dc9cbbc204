use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use poe_rank::estimators::Method;
use poe_rank::selection::SelectionMode;
use poe_rank::simulate::{CurveMethod, Metric, SubsetSelection};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "poe-rank", version, about = "Product-of-experts scoring from pairwise comparisons")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate item scores from a comparison file.
    Score(ScoreArgs),
    /// Choose comparisons greedily by information gain.
    Select(SelectArgs),
    /// Run the synthetic-judge efficiency curve.
    Simulate(SimulateArgs),
    /// Combine both presentation orders of every pair.
    Symmetrize(SymmetrizeArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

/// A command that produces outputs and a manifest. This is what a manifest
/// records and what `replay` runs again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Invocation {
    Score(ScoreArgs),
    Select(SelectArgs),
    Simulate(SimulateArgs),
    Symmetrize(SymmetrizeArgs),
}

impl Invocation {
    pub fn name(&self) -> &'static str {
        match self {
            Invocation::Score(_) => "score",
            Invocation::Select(_) => "select",
            Invocation::Simulate(_) => "simulate",
            Invocation::Symmetrize(_) => "symmetrize",
        }
    }

    pub fn output_paths(&self) -> (Option<&PathBuf>, Option<&PathBuf>) {
        match self {
            Invocation::Score(a) => (a.out.as_ref(), a.manifest.as_ref()),
            Invocation::Select(a) => (a.out.as_ref(), a.manifest.as_ref()),
            Invocation::Simulate(a) => (a.out.as_ref(), a.manifest.as_ref()),
            Invocation::Symmetrize(a) => (a.out.as_ref(), a.manifest.as_ref()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ScoreArgs {
    /// Comparisons as JSON lines (or CSV when the extension is .csv).
    #[arg(long)]
    pub input: PathBuf,
    /// Number of items.
    #[arg(long)]
    pub n: usize,
    /// win-ratio, avg-prob, bt-hard, poe-bt, poe-g or poe-g-hard.
    #[arg(long)]
    pub method: Method,
    /// Estimate and correct positional bias (poe-bt and poe-g only).
    #[arg(long)]
    pub debias: bool,
    /// Combine both presentation orders before scoring.
    #[arg(long)]
    pub symmetric: bool,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    /// Prior variance of the anchored item's score.
    #[arg(long, default_value_t = 1.0)]
    pub sigma0_sq: f64,
    /// Include the posterior covariance (Gaussian methods).
    #[arg(long)]
    pub covariance: bool,
    /// Scores JSON; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Manifest path; defaults to `<out>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SelectArgs {
    #[arg(long)]
    pub n: usize,
    /// Total number of comparisons, including the initial chain.
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value = "gaussian")]
    pub mode: SelectionMode,
    /// Never pick the same unordered pair twice.
    #[arg(long)]
    pub unique_pairs: bool,
    /// Probabilities for laplace-bt, looked up per chosen pair.
    #[arg(long, conflicts_with = "interactive_file")]
    pub input: Option<PathBuf>,
    /// Base path for the laplace-bt handshake: pairs are appended to
    /// `<base>.pairs.jsonl`, answers are read from `<base>.probs.jsonl`.
    #[arg(long)]
    pub interactive_file: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub poll_ms: u64,
    #[arg(long, default_value_t = 600)]
    pub timeout_secs: u64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma0_sq: f64,
    /// Selected pairs as JSON lines; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Number of items; taken from the judge fixture when one is given.
    #[arg(long)]
    pub n: Option<usize>,
    /// Smallest budget; defaults to 2N.
    #[arg(long)]
    pub k_min: Option<usize>,
    /// Largest budget; defaults to the full set.
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Budget increment; defaults to N.
    #[arg(long)]
    pub k_step: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "win-ratio,avg-prob,poe-bt,poe-g"
    )]
    pub methods: Vec<CurveMethod>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Judge fixture JSON; its parameters replace the judge flags.
    #[arg(long)]
    pub judge: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise_sd: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub position_bias: f64,
    #[arg(long, default_value = "random")]
    pub selection: SubsetSelection,
    /// Combine both presentation orders (the default).
    #[arg(long, overrides_with = "non_symmetric")]
    pub symmetric: bool,
    /// Judge each pair in one order only.
    #[arg(long, overrides_with = "symmetric")]
    pub non_symmetric: bool,
    #[arg(long, default_value = "spearman")]
    pub metric: Metric,
    /// Curve CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional JSON mirror of the curve.
    #[arg(long)]
    pub json_out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SymmetrizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub n: usize,
    /// Symmetrized comparisons as JSON lines; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Compare regenerated outputs with the files on disk instead of
    /// overwriting them.
    #[arg(long)]
    pub verify: bool,
}
