//! Mini-batch gradient-descent training loop for the sparse encoder.
//!
//! Training is bit-deterministic given the seed: epoch shuffles and negative
//! subsampling derive ChaCha20 substreams from the seed, batches are
//! processed in order, and gradients accumulate sequentially.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::distill::{substream_rng, subsample_group};
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::loss::{combined_loss_with_grad, BatchItem, LossBreakdown, LossWeights};
use crate::types::{SparseVector, TrainingGroup};

/// Training-loop configuration. `negatives_per_query` caps each group's
/// negative pool by uniform subsampling before training starts (groups with
/// fewer negatives keep what they have); `shuffle` controls the per-epoch
/// group permutation (always derived from `seed`).
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub negatives_per_query: Option<usize>,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            learning_rate: 0.05,
            epochs: 1,
            batch_size: 8,
            negatives_per_query: Some(8),
            seed: 0,
            shuffle: true,
        }
    }
}

/// Loss observed on one batch immediately before its update step.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TraceEntry {
    pub epoch: usize,
    pub step: usize,
    pub breakdown: LossBreakdown,
}

fn validate_config(config: &TrainConfig) -> Result<()> {
    if !config.learning_rate.is_finite() || config.learning_rate < 0.0 {
        return Err(Error::invalid(
            "training config",
            format!("learning rate {} is not a non-negative real", config.learning_rate),
        ));
    }
    if config.batch_size == 0 {
        return Err(Error::invalid("training config", "batch size must be ≥ 1".to_string()));
    }
    Ok(())
}

/// Checks that every query and candidate id has a token-count vector and
/// that all tokens are inside the vocabulary.
fn validate_inputs(
    groups: &[TrainingGroup],
    vectors: &BTreeMap<String, SparseVector>,
    vocab_size: usize,
) -> Result<()> {
    let check_tokens = |id: &str| -> Result<&SparseVector> {
        let counts = vectors.get(id).ok_or_else(|| Error::MissingVector(id.to_string()))?;
        if let Some(term) = counts.max_term() {
            if term as usize >= vocab_size {
                return Err(Error::TokenOutOfRange {
                    id: term,
                    vocab_size,
                });
            }
        }
        Ok(counts)
    };
    for group in groups {
        check_tokens(group.query_id())?;
        for doc in group.candidates() {
            check_tokens(doc)?;
        }
    }
    Ok(())
}

/// Trains the encoder with plain stochastic gradient descent, returning the
/// final parameters and the per-step loss trace (loss is recorded before
/// each update). Aborts with the step number if the loss turns non-finite.
pub fn train(
    params: EncoderParams,
    groups: &[TrainingGroup],
    vectors: &BTreeMap<String, SparseVector>,
    config: &TrainConfig,
) -> Result<(EncoderParams, Vec<TraceEntry>)> {
    validate_config(config)?;
    if groups.is_empty() {
        return Err(Error::Empty("training group set"));
    }
    validate_inputs(groups, vectors, params.vocab_size())?;

    // subsample negatives once, before the loop, so the training set is fixed
    let groups: Vec<TrainingGroup> = match config.negatives_per_query {
        Some(cap) => groups
            .iter()
            .map(|g| subsample_group(g, cap.min(g.negatives().len()), config.seed))
            .collect::<Result<_>>()?,
        None => groups.to_vec(),
    };

    let mut params = params;
    let mut trace = Vec::new();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    let mut step = 0usize;
    for epoch in 0..config.epochs {
        if config.shuffle {
            let mut rng = substream_rng(config.seed, &format!("epoch-{epoch}"));
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<BatchItem<'_>> = chunk
                .iter()
                .map(|&idx| {
                    let group = &groups[idx];
                    BatchItem {
                        group,
                        query: &vectors[group.query_id()],
                        docs: group.candidates().map(|doc| &vectors[doc]).collect(),
                    }
                })
                .collect();
            let (breakdown, gradient) = combined_loss_with_grad(&params, &batch, &config.weights)?;
            if !breakdown.total.is_finite() {
                return Err(Error::Diverged { step });
            }
            trace.push(TraceEntry {
                epoch,
                step,
                breakdown,
            });
            params.apply_gradient(&gradient, config.learning_rate);
            step += 1;
        }
    }
    Ok((params, trace))
}

/// Writes a loss trace as a TSV with one row per step.
pub fn write_trace(trace: &[TraceEntry], path: impl AsRef<std::path::Path>) -> Result<()> {
    use std::io::Write;
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "epoch\tstep\ttotal\tkl\tmargin_mse\tflops_query\tflops_doc")
        .map_err(|e| Error::io(path, e))?;
    for entry in trace {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            entry.epoch,
            entry.step,
            entry.breakdown.total,
            entry.breakdown.kl,
            entry.breakdown.margin_mse,
            entry.breakdown.flops_query,
            entry.breakdown.flops_doc
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
