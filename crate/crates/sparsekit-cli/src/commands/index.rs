use std::path::PathBuf;

use clap::Subcommand;
use sparsekit::error::Result;
use sparsekit::index::{flops_metric, InvertedIndex};
use sparsekit::io::{read_vectors, write_run};
use sparsekit::types::Run;

use crate::commands::{ensure_parent, map_ordered};
use crate::settings::Settings;

#[derive(Subcommand)]
pub enum IndexCmd {
    /// Build an impact-ordered inverted index from document vectors.
    Build {
        /// Document vectors, one JSON object per line.
        #[arg(long, value_name = "JSONL")]
        vectors: PathBuf,
        /// Output directory; the index is written to <DIR>/index.json.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Exact top-k dot-product retrieval over a built index.
    Search {
        /// Directory produced by `index build`.
        #[arg(long, value_name = "DIR")]
        index: PathBuf,
        /// Query vectors, one JSON object per line.
        #[arg(long, value_name = "JSONL")]
        queries: PathBuf,
        /// Results per query.
        #[arg(long)]
        k: Option<usize>,
        /// Run tag written in the output's last column.
        #[arg(long)]
        tag: Option<String>,
        /// Output run file (TREC format).
        #[arg(long, value_name = "RUN")]
        out: PathBuf,
    },
    /// Average number of overlapping terms per (query, doc) pair — the
    /// dot-product cost of retrieval with these vectors.
    Flops {
        #[arg(long, value_name = "JSONL")]
        queries: PathBuf,
        #[arg(long, value_name = "JSONL")]
        docs: PathBuf,
    },
}

pub fn run(cmd: IndexCmd, settings: &Settings) -> Result<()> {
    match cmd {
        IndexCmd::Build { vectors, out } => {
            let (docs, zero_dropped) = read_vectors(&vectors)?;
            if zero_dropped > 0 {
                eprintln!("note: dropped {zero_dropped} non-positive vector entries");
            }
            let index = InvertedIndex::build(docs)?;
            std::fs::create_dir_all(&out).map_err(|e| sparsekit::error::Error::io(&out, e))?;
            index.save(out.join("index.json"))?;
            println!(
                "indexed {} documents, {} postings -> {}",
                index.num_docs(),
                index.num_postings(),
                out.join("index.json").display()
            );
            Ok(())
        }
        IndexCmd::Search {
            index,
            queries,
            k,
            tag,
            out,
        } => {
            let k = settings.usize("k", k, None)?;
            let tag = settings.string("tag", tag, None)?;
            let index = InvertedIndex::load(index.join("index.json"))?;
            let (queries, zero_dropped) = read_vectors(&queries)?;
            if zero_dropped > 0 {
                eprintln!("note: dropped {zero_dropped} non-positive vector entries");
            }
            let rankings = map_ordered(settings.threads(), &queries, |(_, vector)| {
                Ok(index.search(vector, k))
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
                "searched {} queries at k={k} -> {}",
                run.num_queries(),
                out.display()
            );
            Ok(())
        }
        IndexCmd::Flops { queries, docs } => {
            let (queries, _) = read_vectors(&queries)?;
            let (docs, _) = read_vectors(&docs)?;
            let query_vectors: Vec<_> = queries.into_iter().map(|(_, v)| v).collect();
            let doc_vectors: Vec<_> = docs.into_iter().map(|(_, v)| v).collect();
            let value = flops_metric(&query_vectors, &doc_vectors)?;
            println!("{value}");
            Ok(())
        }
    }
}
