//! `sparsekit` — learned sparse retrieval from the command line.
//!
//! Every pipeline stage is a subcommand over plain text files (TREC runs,
//! qrels, JSONL vectors, TSV score tables), and `demo` chains them all on a
//! synthetic collection. Exit codes: 0 success, 1 usage error, 2 data or
//! validation error.

mod commands;
mod settings;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use settings::Settings;

#[derive(Parser)]
#[command(
    name = "sparsekit",
    version,
    about = "Learned sparse retrieval: distillation signals, indexing, evaluation, meta-analysis",
    subcommand_required = true,
    after_help = commands::FORMAT_HELP
)]
struct Cli {
    /// JSON config file with parameter defaults (an object of
    /// flag-name: value); explicit flags win over config values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<std::path::PathBuf>,

    /// Worker threads for per-query stages. Output is identical for any
    /// thread count; the default of 1 is simply the most conservative.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build, search, and measure impact-ordered inverted indexes.
    #[command(subcommand)]
    Index(commands::index::IndexCmd),
    /// BM25 baseline retrieval over token-count vectors.
    #[command(subcommand)]
    Bm25(commands::bm25::Bm25Cmd),
    /// Teacher-score preparation and negative sampling.
    #[command(subcommand)]
    Distill(commands::distill::DistillCmd),
    /// Train a sparse encoder on distilled training groups.
    Train(commands::train::TrainArgs),
    /// Score a run against relevance judgments.
    Eval(commands::eval::EvalArgs),
    /// Re-order the head of a run by externally supplied scores.
    Rerank(commands::rerank::RerankArgs),
    /// Compare two systems across query sets with a random-effects summary.
    #[command(subcommand)]
    Meta(commands::meta::MetaCmd),
    /// End-to-end synthetic walkthrough of the whole pipeline.
    Demo(commands::demo::DemoArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };

    let settings = match Settings::load(cli.config.as_deref(), cli.threads) {
        Ok(settings) => settings,
        Err(err) => exit_data_error(&err),
    };

    let result = match cli.command {
        Command::Index(cmd) => commands::index::run(cmd, &settings),
        Command::Bm25(cmd) => commands::bm25::run(cmd, &settings),
        Command::Distill(cmd) => commands::distill::run(cmd, &settings),
        Command::Train(args) => commands::train::run(args, &settings),
        Command::Eval(args) => commands::eval::run(args, &settings),
        Command::Rerank(args) => commands::rerank::run(args, &settings),
        Command::Meta(cmd) => commands::meta::run(cmd, &settings),
        Command::Demo(args) => commands::demo::run(args, &settings),
    };

    if let Err(err) = result {
        exit_data_error(&err);
    }
}

fn exit_data_error(err: &sparsekit::error::Error) -> ! {
    eprintln!("error: {err}");
    let mut source = std::error::Error::source(err);
    while let Some(cause) = source {
        eprintln!("  caused by: {cause}");
        source = cause.source();
    }
    std::process::exit(2);
}
