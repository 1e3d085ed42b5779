use std::path::PathBuf;

use clap::Args;
use sparsekit::error::Result;
use sparsekit::io::{read_qrels, read_run, write_per_query};
use sparsekit::metrics::{aggregate, evaluate, MetricSpec};

use crate::commands::ensure_parent;
use crate::settings::Settings;

#[derive(Args)]
pub struct EvalArgs {
    /// Run to score (TREC format).
    #[arg(long, value_name = "RUN")]
    run: PathBuf,
    /// Relevance judgments (TREC qrels).
    #[arg(long, value_name = "QRELS")]
    qrels: PathBuf,
    /// Metric and cutoff, e.g. ndcg@10, ndcg_star@10, mrr@10, success@5.
    #[arg(long, value_name = "NAME@K")]
    metric: Option<String>,
    /// Minimum grade counting as relevant for mrr/success (default 1).
    #[arg(long)]
    rel_threshold: Option<u32>,
    /// Optional per-query output TSV ("qid<TAB>score").
    #[arg(long, value_name = "TSV")]
    per_query: Option<PathBuf>,
}

pub fn run(args: EvalArgs, settings: &Settings) -> Result<()> {
    let metric: MetricSpec = settings.string("metric", args.metric, None)?.parse()?;
    let threshold = settings.u32("rel-threshold", args.rel_threshold, Some(1))?;

    let run = read_run(&args.run)?;
    let qrels = read_qrels(&args.qrels)?;
    let scores = evaluate(&run, &qrels, metric, threshold)?;
    let mean = aggregate(&scores)?;

    if let Some(per_query) = &args.per_query {
        ensure_parent(per_query)?;
        write_per_query(&scores, per_query)?;
    }
    println!("{metric}\t{mean}\tqueries={}", scores.len());
    Ok(())
}
