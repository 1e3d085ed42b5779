//! Impact-ordered inverted index with exact top-k dot-product retrieval,
//! plus the FLOPS efficiency metric over sparse representation sets.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{sort_ranking, SparseVector, TermId};

/// Immutable inverted index over a sparse-vector collection.
///
/// Each term maps to a posting list of (doc ordinal, weight) sorted by
/// descending weight with ties broken by ascending ordinal, so iteration
/// order is canonical. Documents with empty vectors are kept in the id
/// table and simply have no postings.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InvertedIndex {
    doc_ids: Vec<String>,
    postings: BTreeMap<TermId, Vec<(u32, f64)>>,
}

impl InvertedIndex {
    /// Builds an index from (doc id, vector) pairs. Duplicate ids are errors.
    pub fn build<I>(collection: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, SparseVector)>,
    {
        let mut doc_ids: Vec<String> = Vec::new();
        let mut seen: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
        let mut postings: BTreeMap<TermId, Vec<(u32, f64)>> = BTreeMap::new();
        for (doc_id, vector) in collection {
            if !seen.insert(doc_id.clone()) {
                return Err(Error::DuplicateId(doc_id));
            }
            let ordinal = doc_ids.len() as u32;
            doc_ids.push(doc_id);
            for (term, weight) in vector.iter() {
                postings.entry(term).or_default().push((ordinal, weight));
            }
        }
        for list in postings.values_mut() {
            list.sort_by(|(oa, wa), (ob, wb)| {
                wb.partial_cmp(wa).expect("finite weights").then(oa.cmp(ob))
            });
        }
        Ok(Self { doc_ids, postings })
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    /// Total number of postings, which equals the total nonzero entries of
    /// the indexed collection.
    pub fn num_postings(&self) -> usize {
        self.postings.values().map(Vec::len).sum()
    }

    pub fn posting_list(&self, term: TermId) -> Option<&[(u32, f64)]> {
        self.postings.get(&term).map(Vec::as_slice)
    }

    pub fn doc_id(&self, ordinal: u32) -> Option<&str> {
        self.doc_ids.get(ordinal as usize).map(String::as_str)
    }

    /// Exact top-k retrieval by dot product. The result is sorted by
    /// descending score with ties broken by ascending doc id and contains
    /// min(k, number of docs with nonzero score) entries — identical to
    /// brute-force scoring of every document. Per-document scores accumulate
    /// query terms in ascending term order, so they are bit-identical to a
    /// merge-join dot product.
    pub fn search(&self, query: &SparseVector, k: usize) -> Vec<(String, f64)> {
        let mut accumulator = vec![0.0f64; self.doc_ids.len()];
        for (term, query_weight) in query.iter() {
            if let Some(list) = self.postings.get(&term) {
                for &(ordinal, doc_weight) in list {
                    accumulator[ordinal as usize] += query_weight * doc_weight;
                }
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

    /// Serializes the index to a JSON snapshot.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)
            .map_err(|e| Error::Json { path: path.into(), source: e })
    }

    /// Loads an index from a JSON snapshot written by [`InvertedIndex::save`].
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let index: Self = serde_json::from_reader(std::io::BufReader::new(file))
            .map_err(|e| Error::Json { path: path.into(), source: e })?;
        for (term, list) in &index.postings {
            for pair in list.windows(2) {
                if pair[0].1 < pair[1].1 {
                    return Err(Error::invalid(
                        "index snapshot",
                        format!("posting list for term {term} is not impact-ordered"),
                    ));
                }
            }
            if list
                .iter()
                .any(|&(ordinal, weight)| weight <= 0.0 || ordinal as usize >= index.doc_ids.len())
            {
                return Err(Error::invalid(
                    "index snapshot",
                    format!("posting list for term {term} has an invalid entry"),
                ));
            }
        }
        Ok(index)
    }
}

/// The FLOPS efficiency metric: Σ_j p_j(queries)·p_j(docs), where p_j(X) is
/// the fraction of vectors in X with a nonzero weight on term j. Equals the
/// expected number of multiplications needed to score a random (query, doc)
/// pair drawn from the two sets. Both collections must be nonempty.
pub fn flops_metric(queries: &[SparseVector], docs: &[SparseVector]) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::Empty("query collection"));
    }
    if docs.is_empty() {
        return Err(Error::Empty("doc collection"));
    }
    let count = |vectors: &[SparseVector]| -> BTreeMap<TermId, usize> {
        let mut counts = BTreeMap::new();
        for v in vectors {
            for term in v.support() {
                *counts.entry(term).or_insert(0) += 1;
            }
        }
        counts
    };
    let query_counts = count(queries);
    let doc_counts = count(docs);
    let (nq, nd) = (queries.len() as f64, docs.len() as f64);
    let mut total = 0.0;
    for (term, &qc) in &query_counts {
        if let Some(&dc) = doc_counts.get(term) {
            total += (qc as f64 / nq) * (dc as f64 / nd);
        }
    }
    Ok(total)
}
