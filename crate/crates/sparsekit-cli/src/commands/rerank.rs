use std::path::PathBuf;

use clap::Args;
use sparsekit::error::Result;
use sparsekit::io::{read_pair_scores, read_run, write_run};
use sparsekit::rerank::rerank_topk;

use crate::commands::ensure_parent;
use crate::settings::Settings;

#[derive(Args)]
pub struct RerankArgs {
    /// Run whose top-k should be re-ordered (TREC format).
    #[arg(long, value_name = "RUN")]
    run: PathBuf,
    /// Replacement scores for the head (TSV: query, doc, score). Must cover
    /// every (query, doc) pair in the top k.
    #[arg(long, value_name = "TSV")]
    scores: PathBuf,
    /// How many top documents are re-ordered (default 50); the tail keeps
    /// its order below them.
    #[arg(long)]
    k: Option<usize>,
    /// Tag for the output run.
    #[arg(long)]
    tag: Option<String>,
    /// Output run file (TREC format).
    #[arg(long, value_name = "RUN")]
    out: PathBuf,
}

pub fn run(args: RerankArgs, settings: &Settings) -> Result<()> {
    let k = settings.usize("k", args.k, Some(50))?;
    let tag = settings.string("tag", args.tag, None)?;

    let run = read_run(&args.run)?;
    let scores = read_pair_scores(&args.scores)?;
    let reranked = rerank_topk(&run, &scores, k)?.with_tag(tag);
    ensure_parent(&args.out)?;
    write_run(&reranked, &args.out)?;
    println!(
        "reranked top-{k} of {} queries -> {}",
        reranked.num_queries(),
        args.out.display()
    );
    Ok(())
}
