use std::path::PathBuf;

use clap::Subcommand;
use sparsekit::bm25::{Bm25Index, Bm25Params};
use sparsekit::error::Result;
use sparsekit::io::{read_vectors, write_run};
use sparsekit::types::Run;

use crate::commands::{ensure_parent, map_ordered};
use crate::settings::Settings;

#[derive(Subcommand)]
pub enum Bm25Cmd {
    /// Rank documents by Okapi BM25 over token-count vectors.
    Search {
        /// Document token counts, one JSON object per line.
        #[arg(long, value_name = "JSONL")]
        corpus: PathBuf,
        /// Query token counts, one JSON object per line.
        #[arg(long, value_name = "JSONL")]
        queries: PathBuf,
        /// Term-frequency saturation (default 0.9).
        #[arg(long)]
        k1: Option<f64>,
        /// Length normalization in [0, 1] (default 0.4).
        #[arg(long)]
        b: Option<f64>,
        /// Results per query.
        #[arg(long)]
        k: Option<usize>,
        /// Run tag written in the output's last column (default "bm25").
        #[arg(long)]
        tag: Option<String>,
        /// Output run file (TREC format).
        #[arg(long, value_name = "RUN")]
        out: PathBuf,
    },
}

pub fn run(cmd: Bm25Cmd, settings: &Settings) -> Result<()> {
    match cmd {
        Bm25Cmd::Search {
            corpus,
            queries,
            k1,
            b,
            k,
            tag,
            out,
        } => {
            let params = Bm25Params::new(
                settings.f64("k1", k1, Some(0.9))?,
                settings.f64("b", b, Some(0.4))?,
            )?;
            let k = settings.usize("k", k, None)?;
            let tag = settings.string("tag", tag, Some("bm25"))?;

            let (corpus, _) = read_vectors(&corpus)?;
            let (queries, _) = read_vectors(&queries)?;
            let index = Bm25Index::build(corpus)?;
            let rankings = map_ordered(settings.threads(), &queries, |(_, vector)| {
                Ok(index.search(vector, params, k))
            })?;
            let entries = queries
                .iter()
                .zip(rankings)
                .flat_map(|((query_id, _), ranking)| {
                    ranking
                        .into_iter()
                        .map(move |(doc, score)| (query_id.clone(), doc, score))
                });
            let run = Run::from_entries(tag, entries)?;
            ensure_parent(&out)?;
            write_run(&run, &out)?;
            println!(
                "bm25 (k1={}, b={}) searched {} queries at k={k} -> {}",
                params.k1(),
                params.b(),
                run.num_queries(),
                out.display()
            );
            Ok(())
        }
    }
}
