use std::path::PathBuf;

use clap::Subcommand;
use sparsekit::distill::{
    attach_scores, ensemble, rescore, sample_negatives, NegativePolicy, RescoreTarget,
};
use sparsekit::error::Result;
use sparsekit::io::{
    read_pair_scores, read_qrels, read_run, read_teacher_scores, write_group_skeletons,
    write_pair_scores, write_training_groups,
};

use crate::commands::ensure_parent;
use crate::settings::Settings;

#[derive(Subcommand)]
pub enum DistillCmd {
    /// Min-max normalize each teacher per query, then average the teachers
    /// into a single score per (query, doc) pair.
    Ensemble {
        /// Teacher score table (TSV with a header row).
        #[arg(long, value_name = "TSV")]
        scores: PathBuf,
        /// Output pair-score TSV.
        #[arg(long, value_name = "TSV")]
        out: PathBuf,
    },
    /// Affinely map scores so their global mean and standard deviation hit
    /// the targets (ranking is preserved).
    Rescore {
        /// Pair scores (TSV: query, doc, score).
        #[arg(long, value_name = "TSV")]
        scores: PathBuf,
        #[arg(long, value_name = "F")]
        target_mean: Option<f64>,
        /// Target population standard deviation (>= 0).
        #[arg(long, value_name = "F")]
        target_std: Option<f64>,
        /// Output pair-score TSV.
        #[arg(long, value_name = "TSV")]
        out: PathBuf,
    },
    /// Build per-query training groups from a retrieval run: the judged
    /// positives plus hard negatives from the top ranks and random
    /// negatives from deeper in the run.
    Negatives {
        /// Retrieval run to sample candidates from.
        #[arg(long, value_name = "RUN")]
        run: PathBuf,
        /// Relevance judgments identifying the positives (grade >= 1).
        #[arg(long, value_name = "QRELS")]
        qrels: PathBuf,
        /// Highest-ranked non-positives taken as hard negatives (default 50).
        #[arg(long)]
        n_top: Option<usize>,
        /// Negatives sampled uniformly from below the hard-negative band
        /// (default 50).
        #[arg(long)]
        n_random: Option<usize>,
        /// Deepest rank the random pool may draw from (default 1000).
        #[arg(long)]
        depth: Option<usize>,
        /// Sampling seed; the same seed always yields the same groups.
        #[arg(long)]
        seed: Option<u64>,
        /// Optional pair-score TSV; when given, scores are attached and the
        /// output contains complete training groups instead of skeletons.
        #[arg(long, value_name = "TSV")]
        scores: Option<PathBuf>,
        /// Output groups, one JSON object per line.
        #[arg(long, value_name = "JSONL")]
        out: PathBuf,
    },
}

pub fn run(cmd: DistillCmd, settings: &Settings) -> Result<()> {
    match cmd {
        DistillCmd::Ensemble { scores, out } => {
            let table = read_teacher_scores(&scores)?;
            let combined = ensemble(&table)?;
            ensure_parent(&out)?;
            write_pair_scores(&combined, &out)?;
            println!(
                "ensembled {} teachers over {} pairs -> {}",
                table.num_teachers(),
                table.num_pairs(),
                out.display()
            );
            Ok(())
        }
        DistillCmd::Rescore {
            scores,
            target_mean,
            target_std,
            out,
        } => {
            let target = RescoreTarget::new(
                settings.f64("target-mean", target_mean, None)?,
                settings.f64("target-std", target_std, None)?,
            )?;
            let scores = read_pair_scores(&scores)?;
            let rescored = rescore(&scores, target)?;
            ensure_parent(&out)?;
            write_pair_scores(&rescored, &out)?;
            println!(
                "rescored to mean {} / std {} -> {}",
                target.mean(),
                target.std(),
                out.display()
            );
            Ok(())
        }
        DistillCmd::Negatives {
            run,
            qrels,
            n_top,
            n_random,
            depth,
            seed,
            scores,
            out,
        } => {
            let policy = NegativePolicy::new(
                settings.usize("n-top", n_top, Some(50))?,
                settings.usize("n-random", n_random, Some(50))?,
                settings.usize("depth", depth, Some(1000))?,
                settings.u64("seed", seed, None)?,
            )?;
            let run = read_run(&run)?;
            let qrels = read_qrels(&qrels)?;
            let positives = qrels.positive_docs(1);
            let (skeletons, warnings) = sample_negatives(&run, &positives, &policy);
            for warning in &warnings {
                eprintln!("warning: {warning}");
            }
            let short = skeletons.iter().filter(|s| s.shortfall > 0).count();
            ensure_parent(&out)?;
            match scores {
                Some(scores_path) => {
                    let pair_scores = read_pair_scores(&scores_path)?;
                    let groups = attach_scores(&skeletons, &pair_scores)?;
                    write_training_groups(&groups, &out)?;
                    println!(
                        "sampled negatives for {} queries ({short} short of target) \
                         with scores attached -> {}",
                        groups.len(),
                        out.display()
                    );
                }
                None => {
                    write_group_skeletons(&skeletons, &out)?;
                    println!(
                        "sampled negatives for {} queries ({short} short of target) -> {}",
                        skeletons.len(),
                        out.display()
                    );
                }
            }
            Ok(())
        }
    }
}
