use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::RangedU64ValueParser;
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use tinder_core::{BetaPolicy, CovarianceMode};

mod commands;
mod compare;

#[derive(Debug, Parser)]
#[command(name = "tinder", version, about = "Interactive rejection clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit iteration 0 of a new session and write it to disk.
    Fit(FitArgs),
    /// Reject the current clustering T times, refitting after each.
    Reject(RejectArgs),
    /// Accept the current clustering; the session becomes read-only.
    Accept(SessionArg),
    /// Print the diversity report of a session as JSON.
    Report(SessionArg),
    /// Export one iteration of a session.
    Export(ExportArgs),
    /// Run T feedback iterations and T random restarts and tabulate both.
    Compare(CompareArgs),
    /// Write a synthetic scenario as CSV.
    Generate(GenerateArgs),
    /// Run the HTTP session service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// CSV file; a header and a `label` column are detected automatically.
    #[arg(long)]
    data: PathBuf,
    /// Ground-truth column (name, or 0-based index), overriding detection.
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long, value_parser = RangedU64ValueParser::<usize>::new().range(1..))]
    k: usize,
    /// Penalty weight, or `auto`.
    #[arg(long, default_value = "1", allow_hyphen_values = true)]
    beta: BetaPolicy,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8, value_parser = RangedU64ValueParser::<usize>::new().range(1..))]
    restarts: usize,
    #[arg(long, value_enum, default_value_t = Covariance::Diagonal)]
    covariance: Covariance,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Covariance {
    Diagonal,
    Spherical,
}

impl From<Covariance> for CovarianceMode {
    fn from(c: Covariance) -> Self {
        match c {
            Covariance::Diagonal => CovarianceMode::Diagonal,
            Covariance::Spherical => CovarianceMode::Spherical,
        }
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "tinder-out")]
    out: PathBuf,
    /// Store full responsibilities in the session file.
    #[arg(long)]
    store_soft: bool,
    /// Add per-cluster probability columns to clustering exports.
    #[arg(long)]
    soft: bool,
    /// Record fit wall times in the session file.
    #[arg(long)]
    timings: bool,
}

#[derive(Debug, Args)]
struct SessionArg {
    #[arg(long)]
    session: PathBuf,
}

#[derive(Debug, Args)]
struct RejectArgs {
    #[arg(long)]
    session: PathBuf,
    #[arg(long, default_value_t = 1)]
    times: usize,
    #[arg(long)]
    store_soft: bool,
    #[arg(long)]
    soft: bool,
    #[arg(long)]
    timings: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    session: PathBuf,
    /// Defaults to the latest iteration.
    #[arg(long)]
    iteration: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    soft: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Feedback iterations (and baseline restarts).
    #[arg(long, default_value_t = 5, value_parser = RangedU64ValueParser::<usize>::new().range(2..))]
    iterations: usize,
    #[arg(long, default_value = "compare.csv")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Scenario {
    FourBlobs,
    TenBlobs,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    scenario: Scenario,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8787)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value = "tinder-data")]
    data_dir: PathBuf,
    /// Browser origin allowed by CORS; any origin when omitted.
    #[arg(long)]
    cors_origin: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let data_args = match &cli.command {
        Command::Fit(args) => Some(&args.data),
        Command::Compare(args) => Some(&args.data),
        _ => None,
    };
    if let Some(args) = data_args {
        if args.k == 1 && args.beta == BetaPolicy::Auto {
            Cli::command()
                .error(ErrorKind::ArgumentConflict, "--beta auto needs --k 2 or more")
                .exit();
        }
    }
    let result = match cli.command {
        Command::Fit(args) => commands::fit(args),
        Command::Reject(args) => commands::reject(args),
        Command::Accept(args) => commands::accept(args),
        Command::Report(args) => commands::report(args),
        Command::Export(args) => commands::export(args),
        Command::Compare(args) => compare::run(args),
        Command::Generate(args) => commands::generate(args),
        Command::Serve(args) => commands::serve(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
