//! Domain types shared by every stage of the pipeline.
//!
//! All types are immutable after construction and validate their invariants
//! in the constructor, so a value that exists is a value that is well formed.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

/// Integer term identifier. Mapping text tokens to ids is the caller's
/// concern; a plain one-token-per-line vocabulary file is supported by
/// [`crate::io::read_vocab`].
pub type TermId = u32;

/// Scores keyed by doc id, for a single query.
pub type QueryScores = BTreeMap<String, f64>;

/// Scores keyed by query id, then doc id.
pub type PairScores = BTreeMap<String, QueryScores>;

/// Non-negative term-weight map over an integer vocabulary.
///
/// Weights are strictly positive and finite; zero weights are never stored.
/// Entries are kept sorted by term id, which makes dot products a merge join
/// and keeps every downstream computation deterministic.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    entries: Vec<(TermId, f64)>,
}

impl SparseVector {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a vector from (term, weight) pairs. Entries with weight <= 0
    /// are dropped; non-finite weights and duplicate terms are errors.
    pub fn from_entries<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (TermId, f64)>,
    {
        let mut kept: Vec<(TermId, f64)> = Vec::new();
        for (term, weight) in entries {
            if !weight.is_finite() {
                return Err(Error::NonFinite(format!("weight for term {term}")));
            }
            if weight > 0.0 {
                kept.push((term, weight));
            }
        }
        kept.sort_by_key(|(term, _)| *term);
        for pair in kept.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::DuplicateTerm(pair[0].0));
            }
        }
        Ok(Self { entries: kept })
    }

    pub fn weight(&self, term: TermId) -> Option<f64> {
        self.entries
            .binary_search_by_key(&term, |(t, _)| *t)
            .ok()
            .map(|idx| self.entries[idx].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (TermId, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn support(&self) -> impl Iterator<Item = TermId> + '_ {
        self.entries.iter().map(|(t, _)| *t)
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_term(&self) -> Option<TermId> {
        self.entries.last().map(|(t, _)| *t)
    }

    /// Exact dot product via merge join over the sorted entries.
    pub fn dot(&self, other: &SparseVector) -> f64 {
        let mut sum = 0.0;
        let (mut i, mut j) = (0, 0);
        while i < self.entries.len() && j < other.entries.len() {
            let (ta, wa) = self.entries[i];
            let (tb, wb) = other.entries[j];
            match ta.cmp(&tb) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    sum += wa * wb;
                    i += 1;
                    j += 1;
                }
            }
        }
        sum
    }
}

impl FromIterator<(TermId, f64)> for SparseVector {
    /// Panics on invalid entries; use [`SparseVector::from_entries`] for
    /// fallible construction from untrusted data.
    fn from_iter<I: IntoIterator<Item = (TermId, f64)>>(iter: I) -> Self {
        Self::from_entries(iter).expect("invalid sparse vector literal")
    }
}

/// Graded relevance judgments per (query, doc) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
    has_negative_judgments: bool,
}

impl Qrels {
    /// Builds qrels from (query, doc, grade) triples. A duplicate
    /// (query, doc) pair is an error.
    pub fn from_entries<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String, u32)>,
    {
        let mut judgments: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
        let mut has_negative = false;
        for (query, doc, grade) in entries {
            has_negative |= grade == 0;
            if judgments
                .entry(query.clone())
                .or_default()
                .insert(doc.clone(), grade)
                .is_some()
            {
                return Err(Error::DuplicatePair { query, doc });
            }
        }
        Ok(Self {
            judgments,
            has_negative_judgments: has_negative,
        })
    }

    /// True iff any judgment has grade 0 (an explicit non-relevant label).
    pub fn has_negative_judgments(&self) -> bool {
        self.has_negative_judgments
    }

    pub fn grade(&self, query: &str, doc: &str) -> Option<u32> {
        self.judgments.get(query).and_then(|m| m.get(doc)).copied()
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn num_queries(&self) -> usize {
        self.judgments.len()
    }

    pub fn judged_docs(&self, query: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query)
    }

    /// Docs judged at grade >= `threshold`, per query. Queries whose
    /// judgments are all below the threshold are omitted.
    pub fn positive_docs(&self, threshold: u32) -> BTreeMap<String, BTreeSet<String>> {
        let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (query, docs) in &self.judgments {
            let positives: BTreeSet<String> = docs
                .iter()
                .filter(|(_, &g)| g >= threshold)
                .map(|(d, _)| d.clone())
                .collect();
            if !positives.is_empty() {
                out.insert(query.clone(), positives);
            }
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.judgments.iter().flat_map(|(q, docs)| {
            docs.iter()
                .map(move |(d, &g)| (q.as_str(), d.as_str(), g))
        })
    }
}

/// Ranked retrieval results per query.
///
/// Within a query, doc ids are unique and the list is sorted by descending
/// score with ties broken by ascending doc id, so serialization is a total
/// order and every downstream metric is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    tag: String,
    rankings: BTreeMap<String, Vec<(String, f64)>>,
}

impl Run {
    /// Builds a run from (query, doc, score) triples, sorting each query's
    /// list canonically. Non-finite scores and duplicate docs are errors.
    pub fn from_entries<I>(tag: impl Into<String>, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String, f64)>,
    {
        let mut rankings: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
        for (query, doc, score) in entries {
            if !score.is_finite() {
                return Err(Error::NonFinite(format!("score for ({query}, {doc})")));
            }
            rankings.entry(query).or_default().push((doc, score));
        }
        for (query, list) in &mut rankings {
            sort_ranking(list);
            for pair in list.windows(2) {
                if pair[0].0 == pair[1].0 {
                    return Err(Error::DuplicatePair {
                        query: query.clone(),
                        doc: pair[0].0.clone(),
                    });
                }
            }
        }
        Ok(Self {
            tag: tag.into(),
            rankings,
        })
    }

    pub fn empty(tag: impl Into<String>) -> Self {
        Self {
            tag: tag.into(),
            rankings: BTreeMap::new(),
        }
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.rankings.keys().map(String::as_str)
    }

    pub fn num_queries(&self) -> usize {
        self.rankings.len()
    }

    /// The ranked (doc, score) list for one query, best first.
    pub fn ranking(&self, query: &str) -> Option<&[(String, f64)]> {
        self.rankings.get(query).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[(String, f64)])> {
        self.rankings.iter().map(|(q, l)| (q.as_str(), l.as_slice()))
    }
}

/// Descending score, ties by ascending doc id. Scores are finite by
/// construction so the comparison is total.
pub(crate) fn sort_ranking(list: &mut [(String, f64)]) {
    list.sort_by(|(da, sa), (db, sb)| {
        sb.partial_cmp(sa)
            .expect("finite scores")
            .then_with(|| da.cmp(db))
    });
}

/// Raw scores from an ensemble of K teachers over (query, doc) pairs.
/// Every pair carries exactly K finite scores.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherScoreTable {
    teacher_names: Vec<String>,
    scores: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
}

impl TeacherScoreTable {
    pub fn from_entries<I>(teacher_names: Vec<String>, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String, Vec<f64>)>,
    {
        if teacher_names.is_empty() {
            return Err(Error::Empty("teacher name list"));
        }
        let k = teacher_names.len();
        let mut scores: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
        for (query, doc, row) in entries {
            if row.len() != k {
                return Err(Error::invalid(
                    "teacher score row",
                    format!("({query}, {doc}) has {} scores, expected {k}", row.len()),
                ));
            }
            if row.iter().any(|s| !s.is_finite()) {
                return Err(Error::NonFinite(format!("teacher score for ({query}, {doc})")));
            }
            if scores
                .entry(query.clone())
                .or_default()
                .insert(doc.clone(), row)
                .is_some()
            {
                return Err(Error::DuplicatePair { query, doc });
            }
        }
        Ok(Self {
            teacher_names,
            scores,
        })
    }

    pub fn teacher_names(&self) -> &[String] {
        &self.teacher_names
    }

    pub fn num_teachers(&self) -> usize {
        self.teacher_names.len()
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.scores.keys().map(String::as_str)
    }

    pub fn candidates(&self, query: &str) -> Option<&BTreeMap<String, Vec<f64>>> {
        self.scores.get(query)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &[f64])> {
        self.scores.iter().flat_map(|(q, docs)| {
            docs.iter()
                .map(move |(d, row)| (q.as_str(), d.as_str(), row.as_slice()))
        })
    }

    pub fn num_pairs(&self) -> usize {
        self.scores.values().map(BTreeMap::len).sum()
    }
}

/// One query with sampled negatives but no scores attached yet.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GroupSkeleton {
    pub query_id: String,
    pub positives: Vec<String>,
    pub negatives: Vec<String>,
    /// How many negatives short of the policy target this query came up,
    /// because the run was too shallow.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub shortfall: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

/// One query with positives, a pool of negatives, and a processed teacher
/// score for every candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingGroup {
    query_id: String,
    positives: Vec<String>,
    negatives: Vec<String>,
    scores: BTreeMap<String, f64>,
}

impl TrainingGroup {
    pub fn new(
        query_id: String,
        positives: Vec<String>,
        negatives: Vec<String>,
        scores: BTreeMap<String, f64>,
    ) -> Result<Self> {
        let fail = |msg: String| Error::InvalidGroup {
            id: query_id.clone(),
            msg,
        };
        if positives.is_empty() {
            return Err(fail("no positives".into()));
        }
        let pos_set: BTreeSet<&String> = positives.iter().collect();
        if pos_set.len() != positives.len() {
            return Err(fail("duplicate positive".into()));
        }
        let neg_set: BTreeSet<&String> = negatives.iter().collect();
        if neg_set.len() != negatives.len() {
            return Err(fail("duplicate negative".into()));
        }
        if let Some(doc) = positives.iter().find(|d| neg_set.contains(d)) {
            return Err(fail(format!("doc {doc:?} is both positive and negative")));
        }
        for doc in positives.iter().chain(negatives.iter()) {
            match scores.get(doc) {
                None => return Err(fail(format!("doc {doc:?} has no processed score"))),
                Some(s) if !s.is_finite() => {
                    return Err(fail(format!("doc {doc:?} has a non-finite score")))
                }
                _ => {}
            }
        }
        Ok(Self {
            query_id,
            positives,
            negatives,
            scores,
        })
    }

    pub fn query_id(&self) -> &str {
        &self.query_id
    }

    pub fn positives(&self) -> &[String] {
        &self.positives
    }

    pub fn negatives(&self) -> &[String] {
        &self.negatives
    }

    pub fn score(&self, doc: &str) -> Option<f64> {
        self.scores.get(doc).copied()
    }

    pub fn scores(&self) -> &BTreeMap<String, f64> {
        &self.scores
    }

    /// Positives followed by negatives, in stored order.
    pub fn candidates(&self) -> impl Iterator<Item = &str> {
        self.positives
            .iter()
            .chain(self.negatives.iter())
            .map(String::as_str)
    }
}
