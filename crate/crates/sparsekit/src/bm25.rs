//! BM25 (Robertson/Okapi) baseline over token-count vectors.
//!
//! IDF uses the smoothed form ln(1 + (N − df + 0.5)/(df + 0.5)), which is
//! strictly positive for every document frequency, so matched documents
//! always score above unmatched ones. Defaults are k1 = 0.9, b = 0.4.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::types::{sort_ranking, SparseVector, TermId};

/// BM25 tuning parameters: k1 > 0 controls term-frequency saturation,
/// b in [0, 1] controls document-length normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    k1: f64,
    b: f64,
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self> {
        if !(k1.is_finite() && k1 > 0.0) {
            return Err(Error::invalid("k1", format!("{k1} is not a positive real")));
        }
        if !(b.is_finite() && (0.0..=1.0).contains(&b)) {
            return Err(Error::invalid("b", format!("{b} is not in [0, 1]")));
        }
        Ok(Self { k1, b })
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 0.9, b: 0.4 }
    }
}

/// Inverted index over token counts, carrying the statistics BM25 needs:
/// document frequencies, document lengths, and the average length.
#[derive(Debug, Clone, PartialEq)]
pub struct Bm25Index {
    doc_ids: Vec<String>,
    postings: BTreeMap<TermId, Vec<(u32, f64)>>,
    doc_len: Vec<f64>,
    avgdl: f64,
}

impl Bm25Index {
    /// Builds the index from (doc id, token counts). Fractional "counts" are
    /// accepted; document length is the sum of counts. The corpus must be
    /// nonempty and ids unique.
    pub fn build<I>(corpus: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, SparseVector)>,
    {
        let mut doc_ids: Vec<String> = Vec::new();
        let mut seen: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
        let mut postings: BTreeMap<TermId, Vec<(u32, f64)>> = BTreeMap::new();
        let mut doc_len: Vec<f64> = Vec::new();
        for (doc_id, counts) in corpus {
            if !seen.insert(doc_id.clone()) {
                return Err(Error::DuplicateId(doc_id));
            }
            let ordinal = doc_ids.len() as u32;
            doc_ids.push(doc_id);
            doc_len.push(counts.iter().map(|(_, c)| c).sum());
            for (term, count) in counts.iter() {
                postings.entry(term).or_default().push((ordinal, count));
            }
        }
        if doc_ids.is_empty() {
            return Err(Error::Empty("corpus"));
        }
        let avgdl = doc_len.iter().sum::<f64>() / doc_len.len() as f64;
        Ok(Self {
            doc_ids,
            postings,
            doc_len,
            avgdl,
        })
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_frequency(&self, term: TermId) -> usize {
        self.postings.get(&term).map_or(0, Vec::len)
    }

    fn idf(&self, term: TermId) -> f64 {
        let n = self.doc_ids.len() as f64;
        let df = self.doc_frequency(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Exact top-k BM25 retrieval. Each matched query term contributes
    /// qtf · idf · tf·(k1+1) / (tf + k1·(1 − b + b·dl/avgdl)); ordering is
    /// descending score, ties by ascending doc id, result length
    /// min(k, docs with nonzero score).
    pub fn search(&self, query: &SparseVector, params: Bm25Params, k: usize) -> Vec<(String, f64)> {
        let mut accumulator = vec![0.0f64; self.doc_ids.len()];
        for (term, qtf) in query.iter() {
            let Some(list) = self.postings.get(&term) else {
                continue;
            };
            let idf = self.idf(term);
            for &(ordinal, tf) in list {
                let dl = self.doc_len[ordinal as usize];
                let norm = params.k1 * (1.0 - params.b + params.b * dl / self.avgdl);
                accumulator[ordinal as usize] += qtf * idf * (tf * (params.k1 + 1.0)) / (tf + norm);
            }
        }
        let mut hits: Vec<(String, f64)> = accumulator
            .iter()
            .enumerate()
            .filter(|(_, &score)| score != 0.0)
            .map(|(ordinal, &score)| (self.doc_ids[ordinal].clone(), score))
            .collect();
        sort_ranking(&mut hits);
        hits.truncate(k);
        hits
    }
}

/// One-shot convenience: build the index and run a single query.
pub fn bm25_search<I>(
    corpus: I,
    query: &SparseVector,
    params: Bm25Params,
    k: usize,
) -> Result<Vec<(String, f64)>>
where
    I: IntoIterator<Item = (String, SparseVector)>,
{
    Ok(Bm25Index::build(corpus)?.search(query, params, k))
}
