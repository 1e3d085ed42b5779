//! Simulated second-stage re-ranking: replace the scores of the top-k
//! documents of a run with externally supplied scores and re-sort the head,
//! keeping the tail in its original order strictly below the head.

use crate::error::{Error, Result};
use crate::types::{sort_ranking, PairScores, Run};

/// Offset separating consecutive tail documents below the head minimum.
const TAIL_STEP: f64 = 1e-6;

/// Re-sorts each query's top-k documents by the supplied scores (ties by
/// doc id). Documents below rank k keep their relative order and receive
/// scores min(new head scores) − 1e-6·position, so the serialized run stays
/// monotone. Per-query membership is unchanged, and re-applying the same
/// scores is idempotent.
///
/// Every (query, doc) pair in some query's top k must have a score; missing
/// pairs are collected into one error (at most five examples shown).
pub fn rerank_topk(run: &Run, scores: &PairScores, k: usize) -> Result<Run> {
    if k < 1 {
        return Err(Error::invalid("rerank cutoff", "k must be ≥ 1".to_string()));
    }
    let mut missing: Vec<(String, String)> = Vec::new();
    let mut entries: Vec<(String, String, f64)> = Vec::new();
    for (query, ranking) in run.iter() {
        let head_len = k.min(ranking.len());
        let query_scores = scores.get(query);
        let mut head: Vec<(String, f64)> = Vec::with_capacity(head_len);
        for (doc, _) in &ranking[..head_len] {
            match query_scores.and_then(|m| m.get(doc)) {
                Some(&s) if s.is_finite() => head.push((doc.clone(), s)),
                Some(_) => {
                    return Err(Error::NonFinite(format!("rerank score for ({query}, {doc})")))
                }
                None => missing.push((query.to_string(), doc.clone())),
            }
        }
        if !missing.is_empty() {
            continue;
        }
        sort_ranking(&mut head);
        let floor = head
            .iter()
            .map(|(_, s)| *s)
            .fold(f64::INFINITY, f64::min);
        for (doc, score) in head {
            entries.push((query.to_string(), doc, score));
        }
        for (position, (doc, _)) in ranking[head_len..].iter().enumerate() {
            entries.push((
                query.to_string(),
                doc.clone(),
                floor - TAIL_STEP * (position + 1) as f64,
            ));
        }
    }
    if !missing.is_empty() {
        let count = missing.len();
        missing.truncate(5);
        return Err(Error::MissingScores {
            count,
            examples: missing,
        });
    }
    Run::from_entries(run.tag(), entries)
}
