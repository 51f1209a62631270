//! `pace`: generate peer pools, train agents, evaluate online adaptation,
//! compute Kuhn best responses and export context embeddings.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime abort.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pace::Error;

#[derive(Parser, Debug)]
#[command(name = "pace", version, about = "Peer adaptation with context encoders")]
struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a train/test peer pool.
    GenPool(GenPoolArgs),
    /// Train an agent from an experiment config.
    Train(TrainArgs),
    /// Evaluate a checkpoint against every tuple of a pool split.
    Eval(EvalArgs),
    /// Online adaptation with an optional peer switch and change detection.
    Adapt(AdaptArgs),
    /// Exact Kuhn Poker best responses.
    Oracle(OracleArgs),
    /// Write per-step context embeddings to CSV.
    ExportEmbeddings(ExportArgs),
}

#[derive(Args, Debug)]
pub struct GenPoolArgs {
    /// `kuhn` or `pp`.
    #[arg(long)]
    pub env: String,
    /// Training tuples (default: 40 for kuhn, 16 for pp).
    #[arg(long)]
    pub train: Option<usize>,
    /// Test tuples (default: 10 for kuhn, 24 for pp).
    #[arg(long)]
    pub test: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Experiment config supplying predator-prey constants and paths.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Experiment config (TOML); defaults apply to every omitted key.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Environment when no config is given.
    #[arg(long)]
    pub env: Option<String>,
    /// `pace`, `pace-reward` or `pace-reward-aux`.
    #[arg(long)]
    pub preset: Option<String>,
    /// Total environment steps.
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: config `out_dir`, under $PACE_OUTPUT_ROOT).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Checkpoint stem (path without `.json` / `.bin`).
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub pool: PathBuf,
    /// `test` or `train`.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Episodes per adaptation run (default: 100 kuhn, 5 pp).
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Context capacity in episodes (default: the episode count).
    #[arg(long)]
    pub n_ctx: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub seeds: Vec<u64>,
    /// Episodes per summary window (default: 10 kuhn, 1 pp).
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AdaptArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    /// First episode played against the next tuple of the pool.
    #[arg(long)]
    pub switch_at: Option<usize>,
    /// Change-detector threshold in [0, 1]; clears the context on detection.
    #[arg(long)]
    pub cth: Option<f64>,
    /// Restrict to one tuple of the split.
    #[arg(long)]
    pub peer: Option<usize>,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    /// Pool whose tuples are solved (both splits).
    #[arg(long, conflicts_with_all = ["xi", "grid"])]
    pub pool: Option<PathBuf>,
    #[arg(long, requires = "eta")]
    pub xi: Option<f64>,
    #[arg(long, requires = "xi")]
    pub eta: Option<f64>,
    /// Solve an N x N grid over [0, 1]^2.
    #[arg(long)]
    pub grid: Option<usize>,
    /// CSV output (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Usage(_)
        | Error::MissingFile(_)
        | Error::Schema { .. }
        | Error::Version { .. }
        | Error::KindMismatch { .. }
        | Error::Config(_) => 1,
        Error::Shape(_) | Error::NonFinite(_) | Error::Io(_) | Error::Csv(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be positive");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::GenPool(a) => commands::gen_pool(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Adapt(a) => commands::adapt(a),
        Command::Oracle(a) => commands::oracle(a),
        Command::ExportEmbeddings(a) => commands::export_embeddings(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
