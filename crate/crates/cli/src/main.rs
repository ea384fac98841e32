//! `opal` — post-hoc refinement of cross-lingual word embedding alignments.
//!
//! Exit codes (stable contract): 0 success, 2 argument errors, 3 data
//! errors, 4 numerical errors.

mod commands;
mod mapfile;

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Refine(args) => commands::refine(args),
        Command::Eval(args) => commands::eval(args),
        Command::Analyze(args) => commands::analyze(args),
        Command::Synth(args) => commands::synth(args),
    };
    match result {
        Ok(()) => 0,
        Err(failure) => {
            eprintln!("opal: {}", failure.message);
            failure.code
        }
    }
}

pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<opal_core::Error> for Failure {
    fn from(err: opal_core::Error) -> Self {
        let code = match err {
            opal_core::Error::InvalidParameter { .. } => 2,
            opal_core::Error::Numerical { .. } => 4,
            _ => 3,
        };
        Failure { code, message: err.to_string() }
    }
}

#[derive(Parser)]
#[command(
    name = "opal",
    version,
    about = "Refine cross-lingual word embedding alignments with an L1-norm orthogonal Procrustes solver",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Refine an aligned embedding pair and write the moved source space
    Refine(RefineArgs),
    /// Score translation retrieval against a gold dictionary (prints JSON)
    Eval(EvalArgs),
    /// Per-pair distance changes between two maps, as CSV
    Analyze(AnalyzeArgs),
    /// Generate a planted-truth synthetic problem pair
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossArg {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalArg {
    Csls,
    Nn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricArg {
    Acc,
    Mrr,
}

#[derive(Args)]
pub struct RefineArgs {
    /// Source embeddings (the space that gets moved), word2vec text format
    #[arg(long, value_name = "FILE")]
    pub src: PathBuf,
    /// Target embeddings (the reference space)
    #[arg(long, value_name = "FILE")]
    pub tgt: PathBuf,
    /// Loss to minimise [default: l1]
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    /// Dictionary bootstrap retrieval [default: csls]
    #[arg(long, value_enum)]
    pub retrieval: Option<RetrievalArg>,
    /// CSLS neighbourhood size [default: 10]
    #[arg(long, value_name = "K")]
    pub csls_k: Option<usize>,
    /// Smoothing coefficient of the tanh surrogate [default: 1e8]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Orthogonality-drift stopping threshold [default: 1e-5]
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Integration step [default: 1e-6]
    #[arg(long)]
    pub dt: Option<f64>,
    /// Total integration time budget [default: 5e-3]
    #[arg(long)]
    pub budget: Option<f64>,
    /// Absolute tolerance of the adaptive integrator [default: 1e-7]
    #[arg(long)]
    pub abs_tol: Option<f64>,
    /// Relative tolerance of the adaptive integrator [default: 1e-5]
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// Integrator steps between stopping-criteria checks [default: 1]
    #[arg(long)]
    pub stride: Option<usize>,
    /// Use the adaptive step-doubling integrator instead of fixed-step RK4
    #[arg(long)]
    pub adaptive: bool,
    /// Stop on loss exceeding the running minimum instead of the previous loss
    #[arg(long)]
    pub compare_running_min: bool,
    /// Keep only the first N vocabulary entries when loading each space
    #[arg(long, value_name = "N")]
    pub vocab_limit: Option<usize>,
    /// Build the dictionary from the first N rows only (map still applies to all)
    #[arg(long, value_name = "N")]
    pub dict_limit: Option<usize>,
    /// Swap the roles of --src and --tgt (the refined output is then the --tgt space)
    #[arg(long)]
    pub swap: bool,
    /// Where to write the refined embeddings
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Where to write the run report JSON
    #[arg(long, value_name = "FILE")]
    pub report: PathBuf,
    /// Also write the learned map (plain text: "d", then d rows of d floats)
    #[arg(long, value_name = "FILE")]
    pub out_map: Option<PathBuf>,
    /// Also write the mutual dictionary as `<src> <tgt>` lines
    #[arg(long, value_name = "FILE")]
    pub out_dict: Option<PathBuf>,
    /// Record measured wall time in the report (off by default so identical
    /// invocations produce byte-identical reports)
    #[arg(long)]
    pub timings: bool,
    /// JSON config file; explicit flags override its values
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Source embeddings, word2vec text format
    #[arg(long, value_name = "FILE")]
    pub src: PathBuf,
    /// Target embeddings
    #[arg(long, value_name = "FILE")]
    pub tgt: PathBuf,
    /// Gold dictionary (`<src> <tgt>` per line; multiple targets per source allowed)
    #[arg(long, value_name = "FILE")]
    pub gold: PathBuf,
    /// Score to report [default: acc]
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    /// Retrieval method [default: csls]
    #[arg(long, value_enum)]
    pub retrieval: Option<RetrievalArg>,
    /// CSLS neighbourhood size [default: 10]
    #[arg(long)]
    pub k: Option<usize>,
    /// Deepest rank contributing to MRR [default: 10]
    #[arg(long)]
    pub max_rank: Option<usize>,
    /// Keep only the first N vocabulary entries when loading each space
    #[arg(long, value_name = "N")]
    pub vocab_limit: Option<usize>,
    /// JSON config file; explicit flags override its values
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Source embeddings, word2vec text format
    #[arg(long, value_name = "FILE")]
    pub src: PathBuf,
    /// Target embeddings
    #[arg(long, value_name = "FILE")]
    pub tgt: PathBuf,
    /// Map applied before refinement (plain-text map file)
    #[arg(long, value_name = "FILE")]
    pub map_before: PathBuf,
    /// Map applied after refinement
    #[arg(long, value_name = "FILE")]
    pub map_after: PathBuf,
    /// Word-pair dictionary defining the analyzed pairs, `<src> <tgt>` per line
    #[arg(long, value_name = "FILE")]
    pub dict: PathBuf,
    /// Where to write the CSV (pair_id,original,refined,delta)
    #[arg(long, value_name = "FILE")]
    pub out_csv: PathBuf,
    /// Also print pair ids whose original distance is an IQR outlier
    #[arg(long)]
    pub iqr: bool,
    /// Keep only the first N vocabulary entries when loading each space
    #[arg(long, value_name = "N")]
    pub vocab_limit: Option<usize>,
}

#[derive(Args)]
pub struct SynthArgs {
    /// Number of rows [default: 200]
    #[arg(long)]
    pub n: Option<usize>,
    /// Vector dimensionality [default: 10]
    #[arg(long)]
    pub d: Option<usize>,
    /// Inlier noise scale [default: 0.01]
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Fraction of rows displaced as outliers [default: 0.1]
    #[arg(long)]
    pub outlier_frac: Option<f64>,
    /// Outlier displacement magnitude [default: 1]
    #[arg(long)]
    pub outlier_scale: Option<f64>,
    /// RNG seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output prefix: writes PREFIX.a.vec, PREFIX.b.vec, PREFIX.json
    #[arg(long, value_name = "PATH")]
    pub out_prefix: PathBuf,
}
