//! A desk-scale differentiable sparse encoder.
//!
//! The model is a single V×V expansion matrix M. A token-count vector x is
//! encoded as rep_j = ln(1 + relu(Σ_i x_i · M_ij)): a log-saturated sparse
//! expansion over the vocabulary. Three variants are supported:
//!
//! - `Full`: the formula above on both query and document sides.
//! - `Lexical`: document side as in Full; query side masks M to its
//!   diagonal, so query representations never leave the query's own tokens
//!   (no query expansion).
//! - `Doc`: document side as in Full; the query is the binary indicator of
//!   its tokens — no learned computation on the query side at all.
//!
//! Scores are dot products of encoded representations, so documents can be
//! served from an inverted index.

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::types::{SparseVector, TermId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderMode {
    Full,
    Lexical,
    Doc,
}

impl std::str::FromStr for EncoderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "lexical" => Ok(Self::Lexical),
            "doc" => Ok(Self::Doc),
            other => Err(Error::invalid(
                "mode",
                format!("{other:?} is not one of full, lexical, doc"),
            )),
        }
    }
}

impl std::fmt::Display for EncoderMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::Lexical => "lexical",
            Self::Doc => "doc",
        })
    }
}

/// Which side of the retrieval pair is being encoded; the mode's masking
/// applies to the query side only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Query,
    Doc,
}

/// Encoder parameters: the expansion matrix in row-major order
/// (entry (i, j) at index i·V + j) plus the variant mode.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    vocab_size: usize,
    mode: EncoderMode,
    weights: Vec<f64>,
}

impl EncoderParams {
    pub fn new(vocab_size: usize, mode: EncoderMode, weights: Vec<f64>) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::Empty("vocabulary"));
        }
        if weights.len() != vocab_size * vocab_size {
            return Err(Error::invalid(
                "encoder weights",
                format!(
                    "expected {}×{} = {} entries, got {}",
                    vocab_size,
                    vocab_size,
                    vocab_size * vocab_size,
                    weights.len()
                ),
            ));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("encoder weights".into()));
        }
        Ok(Self {
            vocab_size,
            mode,
            weights,
        })
    }

    /// Deterministic initialization: identity diagonal plus small negative
    /// off-diagonal noise in [−0.02, −0.01). Negative off-diagonals keep
    /// early representations close to the input tokens, so training starts
    /// sparse and expansion has to be earned through the loss.
    pub fn init(vocab_size: usize, mode: EncoderMode, seed: u64) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::Empty("vocabulary"));
        }
        let mut rng = crate::distill::substream_rng(seed, "encoder-init");
        let mut weights = vec![0.0f64; vocab_size * vocab_size];
        for i in 0..vocab_size {
            for j in 0..vocab_size {
                weights[i * vocab_size + j] = if i == j {
                    1.0
                } else {
                    -0.02 + 0.01 * rng.gen::<f64>()
                };
            }
        }
        Ok(Self {
            vocab_size,
            mode,
            weights,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn mode(&self) -> EncoderMode {
        self.mode
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.vocab_size + col]
    }

    /// Applies one gradient-descent step: w ← w − lr·grad.
    pub(crate) fn apply_gradient(&mut self, gradient: &[f64], learning_rate: f64) {
        debug_assert_eq!(gradient.len(), self.weights.len());
        for (w, g) in self.weights.iter_mut().zip(gradient) {
            *w -= learning_rate * g;
        }
    }

    #[cfg(test)]
    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }
}

/// How a dense representation depends on the parameters, for backpropagation.
#[derive(Debug, Clone)]
pub(crate) enum RepKind {
    /// rep_j = ln(1 + relu(z_j)), z_j = Σ_i x_i·M_ij: every row of M with
    /// i in the input support contributes to every column.
    Dense { z: Vec<f64> },
    /// Diagonal mask (Lexical query side): z_j = x_j·M_jj for j in the
    /// input support, structurally zero elsewhere.
    Diagonal { z: Vec<f64> },
    /// Binary indicator (Doc-mode query side): no parameter dependence.
    Binary,
}

/// A dense encoded representation together with its gradient structure.
#[derive(Debug, Clone)]
pub(crate) struct DenseRep {
    pub rep: Vec<f64>,
    pub kind: RepKind,
}

impl DenseRep {
    /// Dense dot product; bit-identical to the sparse merge-join dot of the
    /// corresponding [`SparseVector`]s because adding exact zeros is exact.
    pub fn dot(&self, other: &DenseRep) -> f64 {
        self.rep
            .iter()
            .zip(other.rep.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn to_sparse(&self) -> SparseVector {
        SparseVector::from_entries(
            self.rep
                .iter()
                .enumerate()
                .filter(|(_, &w)| w > 0.0)
                .map(|(j, &w)| (j as TermId, w)),
        )
        .expect("encoded weights are finite and positive")
    }
}

/// Encodes token counts into a dense representation, keeping the
/// pre-activation values needed for gradients. Tokens at or beyond the
/// vocabulary size are ignored; validated pipelines reject them upfront.
pub(crate) fn encode_dense(params: &EncoderParams, counts: &SparseVector, side: Side) -> DenseRep {
    let v = params.vocab_size;
    match (params.mode, side) {
        (EncoderMode::Doc, Side::Query) => {
            let mut rep = vec![0.0; v];
            for (token, _) in counts.iter() {
                if (token as usize) < v {
                    rep[token as usize] = 1.0;
                }
            }
            DenseRep {
                rep,
                kind: RepKind::Binary,
            }
        }
        (EncoderMode::Lexical, Side::Query) => {
            let mut z = vec![0.0; v];
            for (token, count) in counts.iter() {
                let j = token as usize;
                if j < v {
                    z[j] = count * params.weights[j * v + j];
                }
            }
            let rep = saturate(&z);
            DenseRep {
                rep,
                kind: RepKind::Diagonal { z },
            }
        }
        _ => {
            let mut z = vec![0.0; v];
            for (token, count) in counts.iter() {
                let i = token as usize;
                if i < v {
                    let row = &params.weights[i * v..(i + 1) * v];
                    for (zj, mij) in z.iter_mut().zip(row) {
                        *zj += count * mij;
                    }
                }
            }
            let rep = saturate(&z);
            DenseRep {
                rep,
                kind: RepKind::Dense { z },
            }
        }
    }
}

/// Elementwise ln(1 + relu(z)), with relu'(0) defined as 0 downstream.
fn saturate(z: &[f64]) -> Vec<f64> {
    z.iter()
        .map(|&zj| if zj > 0.0 { zj.ln_1p() } else { 0.0 })
        .collect()
}

/// Accumulates ∂L/∂M from one representation, given upstream = ∂L/∂rep.
/// Applies the saturation derivative 1/(1+z_j) on the active support
/// (z_j > 0; the relu subgradient at exactly 0 is taken as 0).
pub(crate) fn backprop_rep(
    params: &EncoderParams,
    counts: &SparseVector,
    rep: &DenseRep,
    upstream: &[f64],
    gradient: &mut [f64],
) {
    let v = params.vocab_size;
    match &rep.kind {
        RepKind::Binary => {}
        RepKind::Diagonal { z } => {
            for (token, count) in counts.iter() {
                let j = token as usize;
                if j < v && z[j] > 0.0 && upstream[j] != 0.0 {
                    gradient[j * v + j] += upstream[j] / (1.0 + z[j]) * count;
                }
            }
        }
        RepKind::Dense { z } => {
            for j in 0..v {
                if z[j] > 0.0 && upstream[j] != 0.0 {
                    let coefficient = upstream[j] / (1.0 + z[j]);
                    for (token, count) in counts.iter() {
                        let i = token as usize;
                        if i < v {
                            gradient[i * v + j] += coefficient * count;
                        }
                    }
                }
            }
        }
    }
}

/// Encodes token counts into a sparse representation.
pub fn encode(params: &EncoderParams, counts: &SparseVector, side: Side) -> SparseVector {
    encode_dense(params, counts, side).to_sparse()
}

/// Relevance score: encode(query)·encode(doc). Always non-negative because
/// encoded weights are non-negative.
pub fn score(params: &EncoderParams, query_counts: &SparseVector, doc_counts: &SparseVector) -> f64 {
    encode(params, query_counts, Side::Query).dot(&encode(params, doc_counts, Side::Doc))
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Checkpoint {
    version: u32,
    mode: EncoderMode,
    vocab_size: usize,
    weights: Vec<f64>,
}

const CHECKPOINT_VERSION: u32 = 1;

/// Saves parameters as a versioned JSON checkpoint. Weights round-trip
/// exactly (shortest round-tripping decimal form).
pub fn save_checkpoint(params: &EncoderParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let checkpoint = Checkpoint {
        version: CHECKPOINT_VERSION,
        mode: params.mode,
        vocab_size: params.vocab_size,
        weights: params.weights.clone(),
    };
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer(std::io::BufWriter::new(file), &checkpoint)
        .map_err(|e| Error::Json { path: path.into(), source: e })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<EncoderParams> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let checkpoint: Checkpoint = serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| Error::Json { path: path.into(), source: e })?;
    if checkpoint.version != CHECKPOINT_VERSION {
        return Err(Error::InvalidCheckpoint(format!(
            "unsupported version {} (expected {CHECKPOINT_VERSION})",
            checkpoint.version
        )));
    }
    EncoderParams::new(checkpoint.vocab_size, checkpoint.mode, checkpoint.weights)
        .map_err(|e| Error::InvalidCheckpoint(e.to_string()))
}
