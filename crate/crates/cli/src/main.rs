//! `effchan` command-line tool.
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 backend or
//! environment error.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliResult;
use crate::output::{emit, Format};

#[derive(Parser)]
#[command(name = "effchan", version, about = "Effective channels, information budgets and multi-agent runs")]
struct Cli {
    /// Seed for every random choice (simulation, permutation shuffles, mock backend).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (output directory for `run` and `analyze`). Defaults to stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// K* of an embeddings JSONL file, optionally split by a correctness mask.
    Kstar {
        embeddings: PathBuf,
        /// JSON array of booleans, or an object mapping ids to booleans.
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// Monte Carlo coverage contraction curve.
    Simulate {
        #[arg(long)]
        alpha: f64,
        /// Number of evidence bits.
        #[arg(long, default_value_t = 16)]
        m: usize,
        /// Total evidence entropy H(Y|X) in bits, split evenly across evidence bits.
        #[arg(long, default_value_t = 1.0)]
        h: f64,
        #[arg(long, default_value_t = 10)]
        k_max: u32,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        /// Force the single-threaded path.
        #[arg(long)]
        sequential: bool,
    },
    /// Run the experiment described by a TOML config.
    Run { config: PathBuf },
    /// Build the report bundle from one or more transcript stores.
    Analyze {
        #[arg(required = true)]
        stores: Vec<PathBuf>,
        /// Aggregate K*_c / K*_w weighted by subset size instead of per question.
        #[arg(long)]
        pooled: bool,
        /// Encode layers as one ordinal regressor instead of one-hot dummies.
        #[arg(long)]
        ordinal_layers: bool,
        #[arg(long, default_value_t = 1000)]
        shuffles: usize,
    },
    /// Information budget of a discrete joint distribution file.
    Bounds {
        joint: PathBuf,
        /// Number of leading calls to include (default: all).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Fit α to a `k,recovered_fraction` CSV.
    FitAlpha { curve: PathBuf },
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let fmt = |default: Format| cli.format.unwrap_or(default);
    let out = cli.output.as_deref();
    let seed = cli.seed;
    match &cli.command {
        Command::Kstar { embeddings, mask } => {
            emit(out, &commands::kstar::run(embeddings, mask.as_deref(), fmt(Format::Json))?)
        }
        Command::Simulate {
            alpha,
            m,
            h,
            k_max,
            trials,
            sequential,
        } => {
            let args = commands::simulate::SimulateArgs {
                alpha: *alpha,
                m: *m,
                h: *h,
                k_max: *k_max,
                trials: *trials,
                seed: seed.unwrap_or(0),
                sequential: *sequential,
            };
            emit(out, &commands::simulate::run(&args, fmt(Format::Csv))?)
        }
        Command::Run { config } => emit(None, &commands::run::run(config, seed, out)?),
        Command::Analyze {
            stores,
            pooled,
            ordinal_layers,
            shuffles,
        } => {
            let args = commands::analyze::AnalyzeArgs {
                stores: stores.clone(),
                pooled: *pooled,
                ordinal_layers: *ordinal_layers,
                shuffles: *shuffles,
                seed: seed.unwrap_or(0),
            };
            emit(None, &commands::analyze::run(&args, out)?)
        }
        Command::Bounds { joint, n } => {
            emit(out, &commands::bounds::run(joint, *n, fmt(Format::Json))?)
        }
        Command::FitAlpha { curve } => {
            emit(out, &commands::fit_alpha::run(curve, fmt(Format::Json))?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
