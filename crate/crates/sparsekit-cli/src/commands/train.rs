use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use sparsekit::encoder::{load_checkpoint, save_checkpoint, EncoderMode, EncoderParams};
use sparsekit::error::{Error, Result};
use sparsekit::io::{read_training_groups, read_vectors};
use sparsekit::loss::LossWeights;
use sparsekit::train::{train, write_trace, TrainConfig};
use sparsekit::types::SparseVector;

use crate::commands::ensure_parent;
use crate::settings::Settings;

#[derive(Args)]
pub struct TrainArgs {
    /// Training groups with teacher scores, one JSON object per line.
    #[arg(long, value_name = "JSONL")]
    groups: PathBuf,
    /// Token-count vectors for every query and candidate document.
    #[arg(long, value_name = "JSONL")]
    vectors: PathBuf,
    /// Encoder shape: full matrix, diagonal-only (lexical), or binary
    /// query side (doc).
    #[arg(long, value_name = "full|lexical|doc")]
    mode: Option<String>,
    /// Weight of the distribution-matching loss (default 1.0).
    #[arg(long)]
    lambda_kl: Option<f64>,
    /// Weight of the margin-regression loss (default 0.05).
    #[arg(long)]
    lambda_mse: Option<f64>,
    /// Sparsity pressure on query representations (default 0).
    #[arg(long)]
    lambda_flops_q: Option<f64>,
    /// Sparsity pressure on document representations (default 0).
    #[arg(long)]
    lambda_flops_d: Option<f64>,
    /// SGD learning rate (default 0.05).
    #[arg(long)]
    lr: Option<f64>,
    /// Passes over the training groups (default 1).
    #[arg(long)]
    epochs: Option<usize>,
    /// Negatives kept per group, sampled without replacement from the
    /// group's pool (default 8; groups with fewer keep what they have).
    #[arg(long)]
    negatives_per_query: Option<usize>,
    /// Groups per SGD step (default 8).
    #[arg(long)]
    batch_size: Option<usize>,
    /// Seed controlling initialization, shuffling, and subsampling.
    #[arg(long)]
    seed: Option<u64>,
    /// "none" for fresh initialization, or a checkpoint path to resume from.
    #[arg(long, value_name = "CHECKPOINT|none")]
    init: Option<String>,
    /// Vocabulary size; inferred from the vectors when omitted.
    #[arg(long)]
    vocab_size: Option<usize>,
    /// Output checkpoint path.
    #[arg(long, value_name = "JSON")]
    out: PathBuf,
    /// Optional per-step loss trace (TSV).
    #[arg(long, value_name = "TSV")]
    trace: Option<PathBuf>,
}

pub fn run(args: TrainArgs, settings: &Settings) -> Result<()> {
    let weights = LossWeights::new(
        settings.f64("lambda-kl", args.lambda_kl, Some(1.0))?,
        settings.f64("lambda-mse", args.lambda_mse, Some(0.05))?,
        settings.f64("lambda-flops-q", args.lambda_flops_q, Some(0.0))?,
        settings.f64("lambda-flops-d", args.lambda_flops_d, Some(0.0))?,
    )?;
    let seed = settings.u64("seed", args.seed, None)?;
    let config = TrainConfig {
        weights,
        learning_rate: settings.f64("lr", args.lr, Some(0.05))?,
        epochs: settings.usize("epochs", args.epochs, Some(1))?,
        batch_size: settings.usize("batch-size", args.batch_size, Some(8))?,
        negatives_per_query: Some(settings.usize(
            "negatives-per-query",
            args.negatives_per_query,
            Some(8),
        )?),
        seed,
        shuffle: true,
    };

    let groups = read_training_groups(&args.groups)?;
    let (vector_list, _) = read_vectors(&args.vectors)?;
    let vectors: BTreeMap<String, SparseVector> = vector_list.into_iter().collect();

    let mode = settings.string("mode", args.mode.clone(), Some("full"))?;
    let init = settings.string("init", args.init.clone(), Some("none"))?;
    let params = if init == "none" {
        let mode: EncoderMode = mode.parse()?;
        let inferred = vectors
            .values()
            .filter_map(SparseVector::max_term)
            .max()
            .map(|t| t as usize + 1)
            .unwrap_or(0);
        let vocab_size = match args.vocab_size {
            Some(v) => settings.usize("vocab-size", Some(v), None)?,
            None => settings.usize("vocab-size", None, Some(inferred))?,
        };
        if vocab_size < inferred {
            return Err(Error::invalid(
                "vocab size",
                format!("--vocab-size {vocab_size} is below the largest term id + 1 ({inferred})"),
            ));
        }
        EncoderParams::init(vocab_size, mode, seed)?
    } else {
        let params = load_checkpoint(&init)?;
        let requested: EncoderMode = mode.parse()?;
        if args.mode.is_some() && requested != params.mode() {
            return Err(Error::invalid(
                "mode",
                format!(
                    "--mode {requested} conflicts with checkpoint mode {}",
                    params.mode()
                ),
            ));
        }
        params
    };

    let mode = params.mode();
    let (trained, trace) = train(params, &groups, &vectors, &config)?;
    ensure_parent(&args.out)?;
    save_checkpoint(&trained, &args.out)?;
    if let Some(trace_path) = &args.trace {
        ensure_parent(trace_path)?;
        write_trace(&trace, trace_path)?;
    }

    let first = trace.first().map(|t| t.breakdown.total);
    let last = trace.last().map(|t| t.breakdown.total);
    println!(
        "trained {mode} encoder on {} groups: {} steps, loss {} -> {} ({})",
        groups.len(),
        trace.len(),
        first.map_or("n/a".to_string(), |v| format!("{v:.6}")),
        last.map_or("n/a".to_string(), |v| format!("{v:.6}")),
        args.out.display()
    );
    Ok(())
}
