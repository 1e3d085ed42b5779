pub mod bm25;
pub mod demo;
pub mod distill;
pub mod eval;
pub mod index;
pub mod meta;
pub mod rerank;
pub mod train;

use sparsekit::error::Result;

/// File-format reference shown at the end of `--help`.
pub const FORMAT_HELP: &str = "\
File formats (one example line each):
  run (TREC, 6 columns)      q1 Q0 doc42 1 12.500000 my-system
  qrels (TREC, 4 columns)    q1 0 doc42 2
  vectors (JSONL)            {\"id\":\"doc42\",\"vector\":{\"3\":1.5,\"17\":0.25}}
  teacher scores (TSV)       query<TAB>doc<TAB>teacherA<TAB>teacherB...  (header row required)
  pair scores (TSV)          q1<TAB>doc42<TAB>1.25  (optional header)
  per-query scores (TSV)     q1<TAB>0.3072
  training groups (JSONL)    {\"query_id\":\"q1\",\"positives\":[\"d1\"],\"negatives\":[\"d9\"],\"scores\":{\"d1\":1.0,\"d9\":-2.0}}
  checkpoint (JSON)          {\"version\":1,\"mode\":\"full\",\"vocab_size\":4,\"weights\":[...]}
  forest data (JSON)         [{\"kind\":\"set\",\"name\":\"s0\",...}, {\"kind\":\"summary\",...}]

Config file: a flat JSON object of long-flag-name: value pairs, e.g.
  {\"k\": 100, \"seed\": 7, \"lambda-flops-q\": 0.01}
Explicit flags always win over config values. File paths are flags only.";

/// Applies `f` to every item, in order, optionally fanning out over a local
/// thread pool. The output is identical for any thread count: results are
/// collected back in input order and each call is independent.
pub fn map_ordered<T, U, F>(threads: usize, items: &[T], f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| {
            sparsekit::error::Error::invalid("thread pool", e.to_string())
        })?;
    pool.install(|| items.par_iter().map(f).collect())
}

/// Creates the parent directory of `path` if it has one.
pub fn ensure_parent(path: &std::path::Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| sparsekit::error::Error::io(parent, e))?;
        }
    }
    Ok(())
}
