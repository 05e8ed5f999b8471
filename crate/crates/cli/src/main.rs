//! `audience`: command-line driver for estimation, inference, ranking,
//! simulation and offline evaluation.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use audience_core::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "audience", version, about = "Audience creation from repeat-purchase logs")]
struct Cli {
    /// Pipeline configuration (TOML); flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Random seed for fitting and simulation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for artifacts and run manifests.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct EventsArgs {
    /// Event log (CSV, or JSONL by `.jsonl` extension).
    #[arg(long)]
    events: PathBuf,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Skip malformed rows instead of aborting.
    #[arg(long)]
    lenient: bool,
    /// Epoch for calendar timestamps, e.g. 2019-01-01.
    #[arg(long)]
    epoch: Option<String>,
    /// Window length T in days.
    #[arg(long)]
    window: Option<f64>,
}

#[derive(Args, Debug, Clone, Default)]
struct GridArgs {
    #[arg(long)]
    grain_days: Option<f64>,
    #[arg(long)]
    horizon_days: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Format {
    Csv,
    Jsonl,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum MatrixFormat {
    Csv,
    Binary,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum MethodName {
    Top,
    Top45,
    Mf,
    Buyitagain,
    Supermat,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Descriptive statistics of an event log.
    Stats {
        #[command(flatten)]
        events: EventsArgs,
        #[arg(long)]
        regular_months: Option<usize>,
        #[arg(long)]
        head_threshold: Option<u64>,
    },
    /// Promotion and re-seller filters plus attribution matching.
    Preprocess {
        #[command(flatten)]
        events: EventsArgs,
    },
    /// Fits base intensities, kernels and the latent network.
    Estimate {
        #[command(flatten)]
        events: EventsArgs,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Intensity of every user for every category at one tick.
    Infer {
        #[command(flatten)]
        events: EventsArgs,
        /// Model artifact from `estimate`.
        #[arg(long)]
        model: PathBuf,
        /// Evaluation tick in days (default: end of the log window).
        #[arg(long)]
        at: Option<f64>,
        #[arg(long, value_enum, default_value = "csv")]
        output_format: MatrixFormat,
    },
    /// Top users for one or all categories.
    Rank {
        /// Intensity matrix from `infer` (CSV or binary).
        #[arg(long)]
        intensities: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        reach: u64,
        /// Category id (default: every category).
        #[arg(long)]
        category: Option<String>,
    },
    /// Samples a synthetic log from a ground-truth model.
    Simulate {
        /// Ground-truth model JSON.
        #[arg(long)]
        model: PathBuf,
        /// Overrides the model's user count.
        #[arg(long)]
        users: Option<usize>,
        #[arg(long, default_value_t = 0.0)]
        promo_rate: f64,
        #[arg(long, default_value_t = 0)]
        resellers: usize,
    },
    /// Offline precision/recall of SuperMAT and the baselines.
    Evaluate {
        #[command(flatten)]
        events: EventsArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, value_enum, value_delimiter = ',')]
        methods: Option<Vec<MethodName>>,
        /// Reach multipliers k.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<u32>>,
    },
    /// preprocess → estimate → infer → rank → evaluate.
    Pipeline {
        #[command(flatten)]
        events: EventsArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Audience size per category (default: 5·p_c).
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        reach: Option<u64>,
        #[arg(long)]
        category: Option<String>,
        /// Skip the offline evaluation stage.
        #[arg(long)]
        no_evaluate: bool,
    },
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Validation => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numerical => 4,
    }
}

fn report(kind: &str, code: u8, message: &str) -> ExitCode {
    let body = serde_json::json!({ "error": { "kind": kind, "message": message, "exit_code": code } });
    eprintln!("{body}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report("usage", 2, e.to_string().trim_end()),
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.kind();
            let label = match kind {
                ErrorKind::Validation => "validation",
                ErrorKind::Data => "data",
                ErrorKind::Numerical => "numerical",
            };
            report(label, exit_code(kind), &e.to_string())
        }
    }
}
