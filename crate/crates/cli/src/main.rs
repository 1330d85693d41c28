//! `proker`: batch driver for the kernel adapters.
//!
//! Exit codes: 0 success, 1 a requested assertion failed, 2 input or
//! configuration error, 3 numerical or solver error.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use proker::adapters::Method;

#[derive(Parser)]
#[command(name = "proker", version, about = "Training-free kernel adapters over frozen features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one method on a support/query/text triple.
    Eval(EvalArgs),
    /// Hyperparameter sweep over a task manifest.
    Sweep(SweepArgs),
    /// Synthetic 1-D regression comparison.
    Synth(SynthArgs),
    /// Compress a saved ProKeR model into random-feature prototypes.
    Compress(CompressArgs),
    /// Print the header and metadata of an FSF or PKM1 file.
    Inspect(InspectArgs),
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub support: PathBuf,
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long)]
    pub text: PathBuf,
    /// zeroshot, tip, nw, llr or proker
    #[arg(long)]
    pub method: Method,
    /// Kernel as JSON (inline or a file path), e.g. {"family":"rbf","beta":5.0}
    #[arg(long)]
    pub kernel_json: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// RBF bandwidth; the median heuristic is used when absent
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Recorded in the report
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report path; `.json` selects JSON, anything else CSV
    #[arg(long, default_value = "eval.csv")]
    pub out: PathBuf,
    /// Also write the fitted model (proker only) as PKM1
    #[arg(long)]
    pub save_model: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepArgs {
    /// Grid JSON
    #[arg(long)]
    pub grid: PathBuf,
    /// Task manifest JSON
    #[arg(long)]
    pub tasks: PathBuf,
    /// transfer or per-dataset; overrides the grid file
    #[arg(long)]
    pub protocol: Option<String>,
    /// Anchor task name (from the manifest) for the transfer protocol
    #[arg(long)]
    pub anchor: Option<String>,
    /// Base seed for tasks sampled from pools
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "sweep.csv")]
    pub out: PathBuf,
    /// Winning configurations; defaults to selected.json next to --out
    #[arg(long)]
    pub selected: Option<PathBuf>,
}

#[derive(Args)]
pub struct SynthArgs {
    /// Generator parameters JSON; defaults apply to missing keys
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Hyperparameter grid JSON (betas, lambdas, alphas)
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "nw,llr,proker")]
    pub methods: Vec<Method>,
    /// Number of seeds
    #[arg(long, default_value_t = 10)]
    pub seeds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed_start: u64,
    #[arg(long, default_value = "synth-out")]
    pub out_dir: PathBuf,
    /// Exit 1 unless LLR and ProKeR beat NW and ProKeR beats LLR often enough
    #[arg(long)]
    pub assert_ordering: bool,
}

#[derive(Args)]
pub struct CompressArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Number of random features R (even); defaults to 2 * dim
    #[arg(long)]
    pub rff: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub orthogonal: bool,
    /// Bandwidth of the feature map; must equal the model's
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Query FSF to report prototype vs approximate-kernel parity on
    #[arg(long)]
    pub query: Option<PathBuf>,
}

#[derive(Args)]
pub struct InspectArgs {
    pub path: PathBuf,
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("PROKER_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .map_err(|_| format!("PROKER_THREADS must be a non-negative integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = init_threads() {
        eprintln!("error[InvalidConfig]: {msg}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Eval(a) => commands::eval(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Synth(a) => commands::synth(a),
        Command::Compress(a) => commands::compress(a),
        Command::Inspect(a) => commands::inspect(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.name());
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
