//! Per-query and aggregate retrieval-effectiveness metrics.
//!
//! Conventions shared by every metric:
//! - The query universe is the qrels query set: queries judged but missing
//!   from the run score 0, and queries with no positive judgment score 0;
//!   both are included so system comparisons share a universe. Run queries
//!   without judgments are ignored.
//! - nDCG uses exponential gain 2^grade − 1 and discount 1/log2(rank + 1),
//!   with the ideal ranking built from all judged documents of the query.
//! - nDCG* (the judged-only variant) first condenses the retrieved list to
//!   judged documents, closing up ranks — but only when the qrels contain
//!   at least one grade-0 judgment, detected over the whole qrels file;
//!   otherwise it is exactly nDCG.
//! - MRR and Success count documents with grade ≥ threshold (default 1) as
//!   relevant; some collections judge relevance from grade 2 upward, so the
//!   threshold is configurable.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::types::{Qrels, Run};

/// One metric score per query id, each in [0, 1].
pub type PerQueryScores = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Ndcg,
    NdcgStar,
    Mrr,
    Success,
}

/// A metric with its rank cutoff, e.g. `ndcg_star@10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricSpec {
    pub kind: MetricKind,
    pub cutoff: usize,
}

impl MetricSpec {
    pub fn new(kind: MetricKind, cutoff: usize) -> Result<Self> {
        if cutoff == 0 {
            return Err(Error::invalid("metric", "cutoff must be ≥ 1".to_string()));
        }
        Ok(Self { kind, cutoff })
    }
}

impl std::str::FromStr for MetricSpec {
    type Err = Error;

    /// Parses `ndcg@10`, `ndcg_star@10`, `mrr@10`, `success@5`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, cutoff) = s
            .split_once('@')
            .ok_or_else(|| Error::invalid("metric", format!("{s:?} is missing an @cutoff")))?;
        let kind = match name {
            "ndcg" => MetricKind::Ndcg,
            "ndcg_star" => MetricKind::NdcgStar,
            "mrr" => MetricKind::Mrr,
            "success" => MetricKind::Success,
            other => {
                return Err(Error::invalid(
                    "metric",
                    format!("{other:?} is not one of ndcg, ndcg_star, mrr, success"),
                ))
            }
        };
        let cutoff: usize = cutoff
            .parse()
            .map_err(|_| Error::invalid("metric", format!("cutoff {cutoff:?} is not an integer")))?;
        Self::new(kind, cutoff)
    }
}

impl std::fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self.kind {
            MetricKind::Ndcg => "ndcg",
            MetricKind::NdcgStar => "ndcg_star",
            MetricKind::Mrr => "mrr",
            MetricKind::Success => "success",
        };
        write!(f, "{name}@{}", self.cutoff)
    }
}

fn ensure_shared_queries(run: &Run, qrels: &Qrels) -> Result<()> {
    if qrels.queries().any(|q| run.ranking(q).is_some()) {
        Ok(())
    } else {
        Err(Error::NoSharedQueries)
    }
}

fn gain(grade: u32) -> f64 {
    2.0f64.powi(grade as i32) - 1.0
}

/// DCG over grades in rank order (rank 1 first), truncated at k.
fn dcg<I: IntoIterator<Item = u32>>(grades: I, k: usize) -> f64 {
    grades
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(idx, grade)| gain(grade) / ((idx + 2) as f64).log2())
        .sum()
}

fn ideal_dcg(judgments: &BTreeMap<String, u32>, k: usize) -> f64 {
    let mut grades: Vec<u32> = judgments.values().copied().collect();
    grades.sort_unstable_by(|a, b| b.cmp(a));
    dcg(grades, k)
}

fn ndcg_for_query(
    ranking: Option<&[(String, f64)]>,
    judgments: &BTreeMap<String, u32>,
    k: usize,
    condense: bool,
) -> f64 {
    let idcg = ideal_dcg(judgments, k);
    if idcg == 0.0 {
        return 0.0;
    }
    let Some(ranking) = ranking else { return 0.0 };
    let grades = ranking
        .iter()
        .filter_map(|(doc, _)| {
            let grade = judgments.get(doc).copied();
            if condense {
                grade // unjudged docs vanish, closing up ranks
            } else {
                Some(grade.unwrap_or(0)) // unjudged docs occupy ranks with zero gain
            }
        })
        .collect::<Vec<u32>>();
    dcg(grades, k) / idcg
}

/// nDCG@k per query: exponential gain, log2 discount, ideal from all judged
/// documents. Queries without positive judgments, and judged queries missing
/// from the run, score 0.
pub fn ndcg_at_k(run: &Run, qrels: &Qrels, k: usize) -> Result<PerQueryScores> {
    ensure_shared_queries(run, qrels)?;
    Ok(qrels
        .queries()
        .map(|query| {
            let judgments = qrels.judged_docs(query).expect("query from qrels");
            let score = ndcg_for_query(run.ranking(query), judgments, k, false);
            (query.to_string(), score)
        })
        .collect())
}

/// nDCG*@k per query: the retrieved list is condensed to judged documents
/// before scoring — if and only if the qrels carry explicit grade-0
/// judgments. Without grade-0 judgments every retrieved non-relevant
/// document would be "unjudged", condensing would be vacuous cheating, so
/// the metric falls back to plain nDCG@k.
pub fn ndcg_star_at_k(run: &Run, qrels: &Qrels, k: usize) -> Result<PerQueryScores> {
    if !qrels.has_negative_judgments() {
        return ndcg_at_k(run, qrels, k);
    }
    ensure_shared_queries(run, qrels)?;
    Ok(qrels
        .queries()
        .map(|query| {
            let judgments = qrels.judged_docs(query).expect("query from qrels");
            let score = ndcg_for_query(run.ranking(query), judgments, k, true);
            (query.to_string(), score)
        })
        .collect())
}

/// MRR@k per query with a configurable relevance threshold: the reciprocal
/// rank of the first document with grade ≥ threshold in the top k, else 0.
pub fn mrr_at_k_with_threshold(
    run: &Run,
    qrels: &Qrels,
    k: usize,
    threshold: u32,
) -> Result<PerQueryScores> {
    validate_threshold(threshold)?;
    ensure_shared_queries(run, qrels)?;
    Ok(qrels
        .queries()
        .map(|query| {
            let judgments = qrels.judged_docs(query).expect("query from qrels");
            let score = run
                .ranking(query)
                .and_then(|ranking| {
                    ranking.iter().take(k).position(|(doc, _)| {
                        judgments.get(doc).is_some_and(|&g| g >= threshold)
                    })
                })
                .map_or(0.0, |idx| 1.0 / (idx + 1) as f64);
            (query.to_string(), score)
        })
        .collect())
}

/// MRR@k at the default relevance threshold (grade ≥ 1).
pub fn mrr_at_k(run: &Run, qrels: &Qrels, k: usize) -> Result<PerQueryScores> {
    mrr_at_k_with_threshold(run, qrels, k, 1)
}

/// Success@k per query with a configurable relevance threshold: 1 if any
/// document with grade ≥ threshold appears in the top k, else 0.
pub fn success_at_k_with_threshold(
    run: &Run,
    qrels: &Qrels,
    k: usize,
    threshold: u32,
) -> Result<PerQueryScores> {
    validate_threshold(threshold)?;
    ensure_shared_queries(run, qrels)?;
    Ok(qrels
        .queries()
        .map(|query| {
            let judgments = qrels.judged_docs(query).expect("query from qrels");
            let hit = run.ranking(query).is_some_and(|ranking| {
                ranking
                    .iter()
                    .take(k)
                    .any(|(doc, _)| judgments.get(doc).is_some_and(|&g| g >= threshold))
            });
            (query.to_string(), if hit { 1.0 } else { 0.0 })
        })
        .collect())
}

/// Success@k at the default relevance threshold (grade ≥ 1).
pub fn success_at_k(run: &Run, qrels: &Qrels, k: usize) -> Result<PerQueryScores> {
    success_at_k_with_threshold(run, qrels, k, 1)
}

fn validate_threshold(threshold: u32) -> Result<()> {
    if threshold == 0 {
        return Err(Error::invalid(
            "relevance threshold",
            "grade ≥ 0 would count every judged document as relevant".to_string(),
        ));
    }
    Ok(())
}

/// Computes the metric named by `spec`; `threshold` applies to MRR and
/// Success only.
pub fn evaluate(run: &Run, qrels: &Qrels, spec: MetricSpec, threshold: u32) -> Result<PerQueryScores> {
    match spec.kind {
        MetricKind::Ndcg => ndcg_at_k(run, qrels, spec.cutoff),
        MetricKind::NdcgStar => ndcg_star_at_k(run, qrels, spec.cutoff),
        MetricKind::Mrr => mrr_at_k_with_threshold(run, qrels, spec.cutoff, threshold),
        MetricKind::Success => success_at_k_with_threshold(run, qrels, spec.cutoff, threshold),
    }
}

/// Arithmetic mean over the per-query scores.
pub fn aggregate(scores: &PerQueryScores) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("per-query score set"));
    }
    Ok(scores.values().sum::<f64>() / scores.len() as f64)
}
