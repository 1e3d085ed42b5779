//! Deterministic synthetic retrieval collections.
//!
//! Generates a topic-structured corpus of token-count vectors, matching
//! queries, graded relevance judgments, and noisy synthetic teacher scores —
//! everything the end-to-end demo and the statistical test harnesses need,
//! reproducible bit-for-bit from a single seed.

use std::collections::BTreeMap;

use rand::distributions::Distribution;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use statrs::distribution::Normal;

use crate::distill::substream_rng;
use crate::error::{Error, Result};
use crate::types::{Qrels, SparseVector, TeacherScoreTable};

/// Shape of a generated collection.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    /// Vocabulary size; term ids are `0..vocab_size`.
    pub vocab_size: u32,
    /// Number of topics; each topic owns an equal slice of the non-stopword
    /// vocabulary.
    pub num_topics: usize,
    pub num_docs: usize,
    pub num_queries: usize,
    /// Inclusive range of tokens drawn per document.
    pub doc_len: (usize, usize),
    /// Inclusive range of tokens drawn per query.
    pub query_len: (usize, usize),
    /// How many documents get a relevance judgment per query.
    pub judged_per_query: usize,
    /// Size of the shared high-frequency term block at the start of the
    /// vocabulary; these terms appear across all topics, like stopwords.
    pub stopwords: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            vocab_size: 200,
            num_topics: 6,
            num_docs: 150,
            num_queries: 30,
            doc_len: (30, 60),
            query_len: (3, 6),
            judged_per_query: 20,
            stopwords: 20,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.num_topics == 0 || self.num_docs == 0 || self.num_queries == 0 {
            return Err(Error::invalid(
                "synthetic collection",
                "topics, docs and queries must all be positive".to_string(),
            ));
        }
        let content_terms = self.vocab_size.saturating_sub(self.stopwords);
        if (content_terms as usize) < self.num_topics {
            return Err(Error::invalid(
                "synthetic collection",
                format!(
                    "vocabulary of {} leaves fewer than one content term per topic \
                     after {} stopwords",
                    self.vocab_size, self.stopwords
                ),
            ));
        }
        if self.doc_len.0 == 0 || self.doc_len.0 > self.doc_len.1 {
            return Err(Error::invalid(
                "synthetic collection",
                format!("document length range {:?} is empty", self.doc_len),
            ));
        }
        if self.query_len.0 == 0 || self.query_len.0 > self.query_len.1 {
            return Err(Error::invalid(
                "synthetic collection",
                format!("query length range {:?} is empty", self.query_len),
            ));
        }
        if self.judged_per_query == 0 || self.judged_per_query > self.num_docs {
            return Err(Error::invalid(
                "synthetic collection",
                format!(
                    "judged_per_query must lie in 1..={}, got {}",
                    self.num_docs, self.judged_per_query
                ),
            ));
        }
        Ok(())
    }
}

/// A generated collection: documents and queries as token-count vectors,
/// plus graded relevance judgments.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub docs: Vec<(String, SparseVector)>,
    pub queries: Vec<(String, SparseVector)>,
    pub qrels: Qrels,
}

/// Samples term ranks within a block with a 1/(rank+1) profile, so a few
/// terms in every block are much more common than the rest.
struct ZipfBlock {
    start: u32,
    cumulative: Vec<f64>,
}

impl ZipfBlock {
    fn new(start: u32, len: u32) -> Self {
        let mut cumulative = Vec::with_capacity(len as usize);
        let mut total = 0.0;
        for rank in 0..len {
            total += 1.0 / (rank as f64 + 1.0);
            cumulative.push(total);
        }
        ZipfBlock { start, cumulative }
    }

    fn sample(&self, rng: &mut ChaCha20Rng) -> u32 {
        let total = *self.cumulative.last().expect("non-empty block");
        let u = rng.gen_range(0.0..total);
        let idx = self.cumulative.partition_point(|c| *c <= u);
        self.start + idx.min(self.cumulative.len() - 1) as u32
    }
}

fn draw_counts(
    rng: &mut ChaCha20Rng,
    len: usize,
    stop_block: &ZipfBlock,
    topic_block: &ZipfBlock,
    stopword_rate: f64,
    noise_rate: f64,
    vocab_size: u32,
    stopwords: u32,
) -> Result<SparseVector> {
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    for _ in 0..len {
        let r: f64 = rng.gen();
        let term = if r < stopword_rate && stopwords > 0 {
            stop_block.sample(rng)
        } else if r < stopword_rate + noise_rate {
            rng.gen_range(stopwords..vocab_size)
        } else {
            topic_block.sample(rng)
        };
        *counts.entry(term).or_insert(0.0) += 1.0;
    }
    SparseVector::from_entries(counts)
}

/// Generates a collection deterministically from `seed`.
///
/// Documents and queries are drawn from per-topic term distributions over
/// disjoint vocabulary slices, with a shared stopword block mixed into
/// documents. Judgments grade the `judged_per_query` highest-affinity
/// documents per query: the very best get grade 2, the next get grade 1,
/// and the remainder are judged non-relevant (grade 0), so judged-only
/// metric variants have real work to do.
pub fn generate(config: &SynthConfig, seed: u64) -> Result<SynthData> {
    config.validate()?;
    let mut rng = substream_rng(seed, "synth");

    let content_len = config.vocab_size - config.stopwords;
    let topic_len = content_len / config.num_topics as u32;
    let stop_block = ZipfBlock::new(0, config.stopwords.max(1));
    let topic_blocks: Vec<ZipfBlock> = (0..config.num_topics)
        .map(|t| {
            let start = config.stopwords + t as u32 * topic_len;
            // The last topic absorbs the remainder of the vocabulary.
            let len = if t + 1 == config.num_topics {
                config.vocab_size - start
            } else {
                topic_len
            };
            ZipfBlock::new(start, len)
        })
        .collect();

    let mut docs = Vec::with_capacity(config.num_docs);
    for i in 0..config.num_docs {
        let topic = rng.gen_range(0..config.num_topics);
        let len = rng.gen_range(config.doc_len.0..=config.doc_len.1);
        let counts = draw_counts(
            &mut rng,
            len,
            &stop_block,
            &topic_blocks[topic],
            0.25,
            0.05,
            config.vocab_size,
            config.stopwords,
        )?;
        docs.push((format!("d{i:04}"), counts));
    }

    let mut queries = Vec::with_capacity(config.num_queries);
    for i in 0..config.num_queries {
        let topic = rng.gen_range(0..config.num_topics);
        let len = rng.gen_range(config.query_len.0..=config.query_len.1);
        let counts = draw_counts(
            &mut rng,
            len,
            &stop_block,
            &topic_blocks[topic],
            0.10,
            0.0,
            config.vocab_size,
            config.stopwords,
        )?;
        queries.push((format!("q{i:03}"), counts));
    }

    let mut judgments = Vec::new();
    for (query_id, query_vec) in &queries {
        let mut scored: Vec<(usize, f64)> = docs
            .iter()
            .enumerate()
            .map(|(i, (_, doc_vec))| (i, affinity(query_vec, doc_vec)))
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        for (rank, (doc_idx, score)) in scored.iter().take(config.judged_per_query).enumerate() {
            let grade = if *score <= 0.0 {
                0
            } else if rank < 3 {
                2
            } else if rank < 8 {
                1
            } else {
                0
            };
            judgments.push((query_id.clone(), docs[*doc_idx].0.clone(), grade));
        }
    }

    Ok(SynthData {
        docs,
        queries,
        qrels: Qrels::from_entries(judgments)?,
    })
}

/// Length-normalized term overlap between a query and a document, used as
/// the "true" relevance signal behind judgments and teacher scores.
pub fn affinity(query: &SparseVector, doc: &SparseVector) -> f64 {
    let mass: f64 = doc.iter().map(|(_, c)| c).sum();
    query.dot(doc) / (mass + 20.0)
}

/// Synthesizes `num_teachers` noisy teacher score columns for the given
/// (query, doc) pairs.
///
/// Each teacher is an independent positive affine transform of the true
/// affinity plus Gaussian noise, so teachers agree on broad ordering but
/// disagree on scale, offset, and detail — the situation score ensembling
/// is meant for. Deterministic in `seed`.
pub fn teacher_scores(
    queries: &BTreeMap<String, SparseVector>,
    docs: &BTreeMap<String, SparseVector>,
    pairs: &[(String, String)],
    num_teachers: usize,
    seed: u64,
) -> Result<TeacherScoreTable> {
    if num_teachers == 0 {
        return Err(Error::Empty("teacher set"));
    }
    let mut rng = substream_rng(seed, "synth-teachers");
    let noise = Normal::new(0.0, 0.1).map_err(|e| Error::invalid("noise distribution", e.to_string()))?;

    let transforms: Vec<(f64, f64)> = (0..num_teachers)
        .map(|_| {
            let scale = rng.gen_range(0.5..2.0);
            let offset = rng.gen_range(-1.0..1.0);
            (scale, offset)
        })
        .collect();

    let mut scores = Vec::new();
    for (query_id, doc_id) in pairs {
        let query_vec = queries
            .get(query_id)
            .ok_or_else(|| Error::MissingVector(query_id.clone()))?;
        let doc_vec = docs
            .get(doc_id)
            .ok_or_else(|| Error::MissingVector(doc_id.clone()))?;
        let base = affinity(query_vec, doc_vec);
        let row: Vec<f64> = transforms
            .iter()
            .map(|(scale, offset)| scale * base + offset + noise.sample(&mut rng))
            .collect();
        scores.push((query_id.clone(), doc_id.clone(), row));
    }

    let names = (0..num_teachers).map(|k| format!("t{k}")).collect();
    TeacherScoreTable::from_entries(names, scores)
}
