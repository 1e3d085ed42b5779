//! Distillation-signal preparation: per-query min-max normalization of
//! teacher scores, equal-weight ensembling across teachers, affine rescoring
//! to reference moments, hard-negative pool construction from a first-stage
//! run, and negative subsampling for training.
//!
//! All randomness is derived from an explicit seed. Each query gets its own
//! random substream keyed by (seed, query id), so processing order and
//! parallelism cannot change any output.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::{GroupSkeleton, PairScores, QueryScores, Run, TrainingGroup};

/// Target global moments for [`rescore`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescoreTarget {
    mean: f64,
    std: f64,
}

impl RescoreTarget {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !mean.is_finite() || !std.is_finite() {
            return Err(Error::NonFinite("rescore target".into()));
        }
        if std < 0.0 {
            return Err(Error::invalid(
                "rescore target",
                format!("standard deviation {std} is negative"),
            ));
        }
        Ok(Self { mean, std })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        self.std
    }
}

/// How to build a per-query negative pool from a first-stage run:
/// the first `n_top` non-positive ranks, plus `n_random` sampled uniformly
/// without replacement from non-positive ranks (n_top, random_pool_depth].
/// The two windows are disjoint by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegativePolicy {
    n_top: usize,
    n_random: usize,
    random_pool_depth: usize,
    seed: u64,
}

impl NegativePolicy {
    pub fn new(n_top: usize, n_random: usize, random_pool_depth: usize, seed: u64) -> Result<Self> {
        if random_pool_depth < n_top + n_random {
            return Err(Error::invalid(
                "negative policy",
                format!(
                    "pool depth {random_pool_depth} cannot hold {n_top} top + {n_random} random negatives"
                ),
            ));
        }
        Ok(Self {
            n_top,
            n_random,
            random_pool_depth,
            seed,
        })
    }

    /// The defaults: 50 top-ranked negatives plus 50 sampled from the
    /// remainder of the top 1000.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            n_top: 50,
            n_random: 50,
            random_pool_depth: 1000,
            seed,
        }
    }

    pub fn n_top(&self) -> usize {
        self.n_top
    }

    pub fn n_random(&self) -> usize {
        self.n_random
    }

    pub fn random_pool_depth(&self) -> usize {
        self.random_pool_depth
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// A deterministic per-label random substream: the ChaCha20 stream keyed by
/// SHA-256(seed little-endian bytes ‖ label).
pub(crate) fn substream_rng(seed: u64, label: &str) -> ChaCha20Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    ChaCha20Rng::from_seed(hasher.finalize().into())
}

/// Min-max normalizes one query's scores to [0, 1]:
/// (s − min)/(max − min), or 0.5 everywhere when all scores are equal.
pub fn minmax_normalize(scores: &QueryScores) -> Result<QueryScores> {
    if scores.is_empty() {
        return Err(Error::Empty("score map"));
    }
    if let Some((doc, _)) = scores.iter().find(|(_, s)| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score for doc {doc:?}")));
    }
    let min = scores.values().cloned().fold(f64::INFINITY, f64::min);
    let max = scores.values().cloned().fold(f64::NEG_INFINITY, f64::max);
    let normalized = if max == min {
        scores.keys().map(|d| (d.clone(), 0.5)).collect()
    } else {
        scores
            .iter()
            .map(|(d, s)| (d.clone(), (s - min) / (max - min)))
            .collect()
    };
    Ok(normalized)
}

/// Ensembles a multi-teacher score table: per query, each teacher's column
/// is min-max normalized independently, then the K normalized scores are
/// averaged with equal weight. The result is invariant to any per-teacher
/// positive affine transform of the raw scores.
pub fn ensemble(table: &crate::types::TeacherScoreTable) -> Result<PairScores> {
    let k = table.num_teachers();
    let mut out: PairScores = BTreeMap::new();
    for query in table.queries() {
        let candidates = table.candidates(query).expect("query came from the table");
        let mut sums: QueryScores = candidates.keys().map(|d| (d.clone(), 0.0)).collect();
        for teacher in 0..k {
            let column: QueryScores = candidates
                .iter()
                .map(|(d, row)| (d.clone(), row[teacher]))
                .collect();
            for (doc, value) in minmax_normalize(&column)? {
                *sums.get_mut(&doc).expect("same key set") += value;
            }
        }
        let averaged: QueryScores = sums
            .into_iter()
            .map(|(d, sum)| (d, sum / k as f64))
            .collect();
        out.insert(query.to_string(), averaged);
    }
    Ok(out)
}

/// Population mean and standard deviation over all (query, doc) scores.
fn global_moments(scores: &PairScores) -> Result<(f64, f64, usize)> {
    let mut n = 0usize;
    let mut sum = 0.0;
    for (query, docs) in scores {
        for (doc, s) in docs {
            if !s.is_finite() {
                return Err(Error::NonFinite(format!("score for ({query:?}, {doc:?})")));
            }
            sum += s;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Empty("score table"));
    }
    let mean = sum / n as f64;
    let var = scores
        .values()
        .flat_map(|docs| docs.values())
        .map(|s| (s - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    Ok((mean, var.sqrt(), n))
}

/// Affine-transforms all scores (a·s + b) so that their global population
/// mean and standard deviation equal the target. Zero input variance with a
/// positive target standard deviation is an error; with a zero target the
/// output is the constant target mean.
pub fn rescore(scores: &PairScores, target: RescoreTarget) -> Result<PairScores> {
    let (mean, std, _) = global_moments(scores)?;
    let a = if std == 0.0 {
        if target.std > 0.0 {
            return Err(Error::ZeroScoreVariance);
        }
        0.0
    } else {
        target.std / std
    };
    let b = target.mean - a * mean;
    Ok(scores
        .iter()
        .map(|(q, docs)| {
            let mapped = docs.iter().map(|(d, s)| (d.clone(), a * s + b)).collect();
            (q.clone(), mapped)
        })
        .collect())
}

/// Draws `n` distinct indices below `len` uniformly at random and returns
/// them in ascending order.
fn sample_indices(rng: &mut ChaCha20Rng, len: usize, n: usize) -> Vec<usize> {
    let mut chosen = rand::seq::index::sample(rng, len, n).into_vec();
    chosen.sort_unstable();
    chosen
}

/// Builds a negative pool per query from a first-stage run.
///
/// Positives found in the run are skipped without consuming ranks: ranks are
/// counted over the run's non-positive documents only. The first `n_top`
/// such documents are taken verbatim; `n_random` more are sampled uniformly
/// without replacement from non-positive ranks (n_top, random_pool_depth],
/// using the per-query substream of the policy seed. If the run is too
/// shallow for either window, as many documents as exist are taken and the
/// deficit is recorded in the skeleton's `shortfall`.
///
/// Queries in `positives` that are absent from the run are skipped; the
/// second return value carries one warning per skipped query.
pub fn sample_negatives(
    run: &Run,
    positives: &BTreeMap<String, BTreeSet<String>>,
    policy: &NegativePolicy,
) -> (Vec<GroupSkeleton>, Vec<String>) {
    let mut skeletons = Vec::new();
    let mut warnings = Vec::new();
    for (query, positive_docs) in positives {
        let Some(ranking) = run.ranking(query) else {
            warnings.push(format!("query {query:?} absent from run; skipped"));
            continue;
        };
        let non_positive: Vec<&str> = ranking
            .iter()
            .map(|(doc, _)| doc.as_str())
            .filter(|doc| !positive_docs.contains(*doc))
            .collect();
        let top_end = policy.n_top.min(non_positive.len());
        let mut negatives: Vec<String> =
            non_positive[..top_end].iter().map(|d| d.to_string()).collect();
        let mut shortfall = policy.n_top - top_end;

        let window = &non_positive[top_end.min(non_positive.len())
            ..policy.random_pool_depth.min(non_positive.len())];
        let take = policy.n_random.min(window.len());
        shortfall += policy.n_random - take;
        let mut rng = substream_rng(policy.seed, query);
        for idx in sample_indices(&mut rng, window.len(), take) {
            negatives.push(window[idx].to_string());
        }

        skeletons.push(GroupSkeleton {
            query_id: query.clone(),
            positives: positive_docs.iter().cloned().collect(),
            negatives,
            shortfall,
        });
    }
    (skeletons, warnings)
}

/// Joins processed scores onto skeletons, producing validated training
/// groups. Every (query, candidate) pair must have a score; missing pairs
/// are collected into one error (at most five examples shown).
pub fn attach_scores(
    skeletons: &[GroupSkeleton],
    scores: &PairScores,
) -> Result<Vec<TrainingGroup>> {
    let mut missing: Vec<(String, String)> = Vec::new();
    let mut groups = Vec::with_capacity(skeletons.len());
    for skeleton in skeletons {
        let query_scores = scores.get(&skeleton.query_id);
        let mut attached: BTreeMap<String, f64> = BTreeMap::new();
        for doc in skeleton.positives.iter().chain(skeleton.negatives.iter()) {
            match query_scores.and_then(|m| m.get(doc)) {
                Some(&s) => {
                    attached.insert(doc.clone(), s);
                }
                None => missing.push((skeleton.query_id.clone(), doc.clone())),
            }
        }
        if missing.is_empty() {
            groups.push(TrainingGroup::new(
                skeleton.query_id.clone(),
                skeleton.positives.clone(),
                skeleton.negatives.clone(),
                attached,
            )?);
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
    Ok(groups)
}

/// Uniformly subsamples `n` of the group's negatives without replacement,
/// deterministically from (seed, query id), preserving the original pool
/// order among the kept negatives. Positives and their scores are untouched;
/// scores of dropped negatives are dropped with them.
pub fn subsample_group(group: &TrainingGroup, n: usize, seed: u64) -> Result<TrainingGroup> {
    let pool = group.negatives();
    if n > pool.len() {
        return Err(Error::SubsampleTooLarge {
            requested: n,
            available: pool.len(),
        });
    }
    let mut rng = substream_rng(seed, group.query_id());
    let kept: Vec<String> = sample_indices(&mut rng, pool.len(), n)
        .into_iter()
        .map(|idx| pool[idx].clone())
        .collect();
    let keep_set: BTreeSet<&String> = group.positives().iter().chain(kept.iter()).collect();
    let scores: BTreeMap<String, f64> = group
        .scores()
        .iter()
        .filter(|(doc, _)| keep_set.contains(doc))
        .map(|(doc, &s)| (doc.clone(), s))
        .collect();
    TrainingGroup::new(
        group.query_id().to_string(),
        group.positives().to_vec(),
        kept,
        scores,
    )
}
