//! Training objective: listwise KL-divergence distillation, MarginMSE
//! distillation, the FLOPS sparsity regularizer, and the combined loss with
//! its exact analytic gradient over the encoder matrix.
//!
//! Conventions, stated once and used everywhere:
//! - KL direction is KL(teacher ‖ student) over softmax(temperature 1) of
//!   the scores across a group's full candidate set; a group with fewer
//!   than two candidates contributes 0 (a point distribution matches
//!   itself).
//! - MarginMSE anchors margins at the group's first positive and averages
//!   the squared margin error over the negatives.
//! - Group losses are averaged (not summed) over the batch, so loss weights
//!   are batch-size independent.
//! - The FLOPS regularizer is Σ_j (mean over the batch of rep_j)², computed
//!   separately for the query side (one representation per group) and the
//!   document side (every candidate of every group).
//! - relu'(0) = 0: a pre-activation sitting exactly on the kink has zero
//!   gradient.

use crate::encoder::{backprop_rep, encode_dense, DenseRep, EncoderParams, Side};
use crate::error::{Error, Result};
use crate::types::{SparseVector, TrainingGroup};

/// Non-negative weights for the combined objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_kl: f64,
    pub lambda_mse: f64,
    pub lambda_flops_q: f64,
    pub lambda_flops_d: f64,
}

impl LossWeights {
    pub fn new(
        lambda_kl: f64,
        lambda_mse: f64,
        lambda_flops_q: f64,
        lambda_flops_d: f64,
    ) -> Result<Self> {
        for (name, value) in [
            ("lambda_kl", lambda_kl),
            ("lambda_mse", lambda_mse),
            ("lambda_flops_q", lambda_flops_q),
            ("lambda_flops_d", lambda_flops_d),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::invalid(
                    "loss weights",
                    format!("{name} = {value} is not a non-negative real"),
                ));
            }
        }
        Ok(Self {
            lambda_kl,
            lambda_mse,
            lambda_flops_q,
            lambda_flops_d,
        })
    }
}

impl Default for LossWeights {
    /// λ_KL = 1, λ_MSE = 0.05, no sparsity regularization.
    fn default() -> Self {
        Self {
            lambda_kl: 1.0,
            lambda_mse: 0.05,
            lambda_flops_q: 0.0,
            lambda_flops_d: 0.0,
        }
    }
}

/// One training group with its token-count vectors resolved: `docs` is
/// aligned with `group.candidates()` (positives first, then negatives).
#[derive(Debug, Clone)]
pub struct BatchItem<'a> {
    pub group: &'a TrainingGroup,
    pub query: &'a SparseVector,
    pub docs: Vec<&'a SparseVector>,
}

impl<'a> BatchItem<'a> {
    /// Teacher scores in candidate order.
    fn teacher_scores(&self) -> Vec<f64> {
        self.group
            .candidates()
            .map(|doc| self.group.score(doc).expect("group validated"))
            .collect()
    }
}

/// The combined loss value and its components. `kl` and `margin_mse` are
/// unweighted means over the batch's groups; `flops_query` and `flops_doc`
/// are the unweighted regularizer values; `total` is the λ-weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub kl: f64,
    pub margin_mse: f64,
    pub flops_query: f64,
    pub flops_doc: f64,
}

/// MarginMSE distillation loss for one group: the mean over negatives n of
/// ((s_p − s_n) − (t_p − t_n))², with p the first positive. Scores are in
/// candidate order (positives first). Invariant to adding a constant to all
/// teacher scores. An empty negative set is an error.
pub fn margin_mse_loss(student: &[f64], teacher: &[f64], group: &TrainingGroup) -> Result<f64> {
    let num_candidates = group.positives().len() + group.negatives().len();
    if student.len() != num_candidates || teacher.len() != num_candidates {
        return Err(Error::invalid(
            "score slice",
            format!(
                "group {:?} has {num_candidates} candidates but got {}/{} scores",
                group.query_id(),
                student.len(),
                teacher.len()
            ),
        ));
    }
    if group.negatives().is_empty() {
        return Err(Error::EmptyNegatives(group.query_id().to_string()));
    }
    let first_negative = group.positives().len();
    let mut sum = 0.0;
    for n in first_negative..num_candidates {
        let student_margin = student[0] - student[n];
        let teacher_margin = teacher[0] - teacher[n];
        sum += (student_margin - teacher_margin).powi(2);
    }
    Ok(sum / group.negatives().len() as f64)
}

/// Numerically stable log-softmax at temperature 1.
fn log_softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_norm = scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    scores.iter().map(|s| s - max - log_norm).collect()
}

/// Listwise KL-divergence distillation loss for one group:
/// KL(softmax(teacher) ‖ softmax(student)) over the full candidate set.
/// Invariant to adding a constant to either score list. Groups with fewer
/// than two candidates return 0.
pub fn kl_div_loss(student: &[f64], teacher: &[f64], group: &TrainingGroup) -> Result<f64> {
    let num_candidates = group.positives().len() + group.negatives().len();
    if student.len() != num_candidates || teacher.len() != num_candidates {
        return Err(Error::invalid(
            "score slice",
            format!(
                "group {:?} has {num_candidates} candidates but got {}/{} scores",
                group.query_id(),
                student.len(),
                teacher.len()
            ),
        ));
    }
    if num_candidates < 2 {
        return Ok(0.0);
    }
    let log_teacher = log_softmax(teacher);
    let log_student = log_softmax(student);
    let kl = log_teacher
        .iter()
        .zip(log_student.iter())
        .map(|(lt, ls)| lt.exp() * (lt - ls))
        .sum::<f64>();
    // softmax probabilities are strictly positive, so kl is finite; tiny
    // negative values can appear from rounding when the distributions match
    Ok(kl.max(0.0))
}

/// FLOPS sparsity regularizer over a batch of representations:
/// Σ_j (mean over the batch of rep_j)². An empty batch contributes 0.
pub fn flops_reg(representations: &[SparseVector]) -> f64 {
    if representations.is_empty() {
        return 0.0;
    }
    let mut sums: std::collections::BTreeMap<u32, f64> = std::collections::BTreeMap::new();
    for rep in representations {
        for (term, weight) in rep.iter() {
            *sums.entry(term).or_insert(0.0) += weight;
        }
    }
    let batch = representations.len() as f64;
    sums.values().map(|sum| (sum / batch).powi(2)).sum()
}

/// Dense-side counterpart of [`flops_reg`] used inside the combined loss:
/// returns the per-term batch means alongside the regularizer value so the
/// gradient can reuse them. Summation runs in ascending term order, matching
/// the sparse version bit for bit.
fn flops_reg_dense(reps: &[&DenseRep], vocab_size: usize) -> (f64, Vec<f64>) {
    let mut means = vec![0.0f64; vocab_size];
    if reps.is_empty() {
        return (0.0, means);
    }
    let batch = reps.len() as f64;
    for rep in reps {
        for (mean, value) in means.iter_mut().zip(rep.rep.iter()) {
            *mean += value;
        }
    }
    let mut value = 0.0;
    for mean in means.iter_mut() {
        *mean /= batch;
        value += (*mean) * (*mean);
    }
    (value, means)
}

struct EncodedGroup {
    query_rep: DenseRep,
    doc_reps: Vec<DenseRep>,
    student: Vec<f64>,
    teacher: Vec<f64>,
}

fn encode_batch(params: &EncoderParams, batch: &[BatchItem<'_>]) -> Vec<EncodedGroup> {
    batch
        .iter()
        .map(|item| {
            let query_rep = encode_dense(params, item.query, Side::Query);
            let doc_reps: Vec<DenseRep> = item
                .docs
                .iter()
                .map(|doc| encode_dense(params, doc, Side::Doc))
                .collect();
            let student: Vec<f64> = doc_reps.iter().map(|d| query_rep.dot(d)).collect();
            EncodedGroup {
                query_rep,
                doc_reps,
                student,
                teacher: item.teacher_scores(),
            }
        })
        .collect()
}

fn validate_batch(batch: &[BatchItem<'_>], weights: &LossWeights) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    for item in batch {
        let num_candidates = item.group.positives().len() + item.group.negatives().len();
        if item.docs.len() != num_candidates {
            return Err(Error::invalid(
                "batch item",
                format!(
                    "group {:?} has {num_candidates} candidates but {} doc vectors",
                    item.group.query_id(),
                    item.docs.len()
                ),
            ));
        }
        if weights.lambda_mse > 0.0 && item.group.negatives().is_empty() {
            return Err(Error::EmptyNegatives(item.group.query_id().to_string()));
        }
    }
    Ok(())
}

fn breakdown_from(
    batch: &[BatchItem<'_>],
    encoded: &[EncodedGroup],
    weights: &LossWeights,
    vocab_size: usize,
) -> Result<(LossBreakdown, Vec<f64>, Vec<f64>)> {
    let num_groups = batch.len() as f64;
    let mut kl_sum = 0.0;
    let mut mse_sum = 0.0;
    for (item, enc) in batch.iter().zip(encoded) {
        kl_sum += kl_div_loss(&enc.student, &enc.teacher, item.group)?;
        if !item.group.negatives().is_empty() {
            mse_sum += margin_mse_loss(&enc.student, &enc.teacher, item.group)?;
        }
    }
    let query_reps: Vec<&DenseRep> = encoded.iter().map(|e| &e.query_rep).collect();
    let doc_reps: Vec<&DenseRep> = encoded.iter().flat_map(|e| e.doc_reps.iter()).collect();
    let (flops_query, query_means) = flops_reg_dense(&query_reps, vocab_size);
    let (flops_doc, doc_means) = flops_reg_dense(&doc_reps, vocab_size);
    let kl = kl_sum / num_groups;
    let margin_mse = mse_sum / num_groups;
    let total = weights.lambda_kl * kl
        + weights.lambda_mse * margin_mse
        + weights.lambda_flops_q * flops_query
        + weights.lambda_flops_d * flops_doc;
    Ok((
        LossBreakdown {
            total,
            kl,
            margin_mse,
            flops_query,
            flops_doc,
        },
        query_means,
        doc_means,
    ))
}

/// Forward evaluation of the combined objective:
/// λ_KL·mean(KL) + λ_MSE·mean(MarginMSE) + λ_fq·R(query reps) + λ_fd·R(doc reps).
pub fn combined_loss(
    params: &EncoderParams,
    batch: &[BatchItem<'_>],
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    validate_batch(batch, weights)?;
    let encoded = encode_batch(params, batch);
    let (breakdown, _, _) = breakdown_from(batch, &encoded, weights, params.vocab_size())?;
    Ok(breakdown)
}

/// Combined objective plus its exact analytic gradient with respect to the
/// encoder matrix (row-major, same layout as [`EncoderParams::weights`]).
/// Accumulation order is fixed (groups in batch order, candidates in group
/// order, terms ascending), so results are bit-deterministic.
pub fn combined_loss_with_grad(
    params: &EncoderParams,
    batch: &[BatchItem<'_>],
    weights: &LossWeights,
) -> Result<(LossBreakdown, Vec<f64>)> {
    validate_batch(batch, weights)?;
    let v = params.vocab_size();
    let encoded = encode_batch(params, batch);
    let (breakdown, query_means, doc_means) = breakdown_from(batch, &encoded, weights, v)?;

    let mut gradient = vec![0.0f64; v * v];
    let num_groups = batch.len() as f64;
    let num_query_reps = encoded.len() as f64;
    let num_doc_reps: f64 = encoded.iter().map(|e| e.doc_reps.len()).sum::<usize>() as f64;

    for (item, enc) in batch.iter().zip(&encoded) {
        let candidates = enc.student.len();
        // ∂L/∂s_t for every candidate t, from both distillation terms
        let mut score_grad = vec![0.0f64; candidates];
        if weights.lambda_kl > 0.0 && candidates >= 2 {
            let log_teacher = log_softmax(&enc.teacher);
            let log_student = log_softmax(&enc.student);
            for t in 0..candidates {
                // d KL / d s_t = softmax(student)_t − softmax(teacher)_t
                score_grad[t] +=
                    weights.lambda_kl / num_groups * (log_student[t].exp() - log_teacher[t].exp());
            }
        }
        if weights.lambda_mse > 0.0 && !item.group.negatives().is_empty() {
            let first_negative = item.group.positives().len();
            let num_negatives = (candidates - first_negative) as f64;
            let scale = weights.lambda_mse / num_groups * 2.0 / num_negatives;
            for n in first_negative..candidates {
                let margin_error =
                    (enc.student[0] - enc.student[n]) - (enc.teacher[0] - enc.teacher[n]);
                score_grad[0] += scale * margin_error;
                score_grad[n] -= scale * margin_error;
            }
        }

        // score backprop: s_t = Σ_j qrep_j · drep_{t,j}
        let mut query_upstream = vec![0.0f64; v];
        for (t, doc_rep) in enc.doc_reps.iter().enumerate() {
            let alpha = score_grad[t];
            if alpha != 0.0 {
                for (acc, dr) in query_upstream.iter_mut().zip(doc_rep.rep.iter()) {
                    *acc += alpha * dr;
                }
                let doc_upstream: Vec<f64> =
                    enc.query_rep.rep.iter().map(|qr| alpha * qr).collect();
                backprop_rep(params, item.docs[t], doc_rep, &doc_upstream, &mut gradient);
            }
        }
        backprop_rep(params, item.query, &enc.query_rep, &query_upstream, &mut gradient);

        // FLOPS regularizer backprop: ∂R/∂rep_{b,j} = 2·mean_j / batch
        if weights.lambda_flops_q > 0.0 {
            let upstream: Vec<f64> = query_means
                .iter()
                .map(|m| weights.lambda_flops_q * 2.0 * m / num_query_reps)
                .collect();
            backprop_rep(params, item.query, &enc.query_rep, &upstream, &mut gradient);
        }
        if weights.lambda_flops_d > 0.0 {
            let upstream: Vec<f64> = doc_means
                .iter()
                .map(|m| weights.lambda_flops_d * 2.0 * m / num_doc_reps)
                .collect();
            for (doc_counts, doc_rep) in item.docs.iter().zip(&enc.doc_reps) {
                backprop_rep(params, doc_counts, doc_rep, &upstream, &mut gradient);
            }
        }
    }
    Ok((breakdown, gradient))
}
