mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "omprag", version, about = "Retrieval-augmented OpenMP parallelization and validation")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. Unset flags fall back to `OMPRAG_*`
/// variables, then the config file, then built-in defaults.
#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// `p4omp` or `baseline`.
    #[arg(long, global = true)]
    pub profile: Option<String>,
    /// Retrieved chunks per prompt.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub temperature: Option<f64>,
    /// Thread counts for the bench sweep, e.g. `1,2,4,8`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub threads_sweep: Option<Vec<usize>>,
    /// Answer from recorded replies instead of the live model.
    #[arg(long, global = true)]
    pub replay_dir: Option<PathBuf>,
    /// Case manifest (JSONL).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// More log output; repeat for trace.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Chunk the knowledge corpus into `corpus/manifest.jsonl`.
    Ingest(commands::IngestArgs),
    /// Embed the chunks into `corpus/index.jsonl`.
    Index(commands::IndexArgs),
    /// Collect and filter candidate snippets from the Q&A API.
    Harvest(commands::HarvestArgs),
    /// Prompt the model for each case and extract the code.
    Transform(commands::TransformArgs),
    /// Compile, classify and differentially test transformed cases.
    Validate,
    /// Time accepted binaries across thread counts, or import timings.
    Bench(commands::BenchArgs),
    /// Summarize one or more report sets.
    Report(commands::ReportArgs),
    /// Ingest, index, transform and validate in one go.
    Run(commands::TransformArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let settings = match config::load(&cli.global) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::Ingest(a) => commands::ingest(&settings, a),
        Command::Index(a) => commands::index(&settings, a),
        Command::Harvest(a) => commands::harvest(&settings, a),
        Command::Transform(a) => commands::transform(&settings, a),
        Command::Validate => commands::validate(&settings),
        Command::Bench(a) => commands::bench(&settings, a),
        Command::Report(a) => commands::report(a),
        Command::Run(a) => commands::run(&settings, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<commands::UsageError>().is_some() => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
