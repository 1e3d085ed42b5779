use std::path::PathBuf;

use clap::{Args, Subcommand};
use sparsekit::error::{Error, Result};
use sparsekit::io::read_per_query;
use sparsekit::meta::{compare_set_with_effect, emit_forest, summarize, EffectKind};

use crate::commands::ensure_parent;
use crate::settings::Settings;

#[derive(Subcommand)]
pub enum MetaCmd {
    /// Paired comparison of system A vs system B on each query set, pooled
    /// into a random-effects summary with forest-plot output.
    Compare(CompareArgs),
}

#[derive(Args)]
pub struct CompareArgs {
    /// Per-query score files for system A, one per query set.
    #[arg(long = "a", value_name = "TSV", num_args = 1.., required = true)]
    a: Vec<PathBuf>,
    /// Per-query score files for system B, aligned with --a.
    #[arg(long = "b", value_name = "TSV", num_args = 1.., required = true)]
    b: Vec<PathBuf>,
    /// Comma-separated query-set names, aligned with --a.
    #[arg(long, value_delimiter = ',', required = true)]
    names: Vec<String>,
    /// Significance level for all intervals (default 0.05).
    #[arg(long)]
    alpha: Option<f64>,
    /// Effect size: "raw" score deltas (default) or "standardized"
    /// (deltas divided by their standard deviation).
    #[arg(long, value_name = "raw|standardized")]
    effect: Option<String>,
    /// Bonferroni-correct the per-set intervals (alpha / number of sets);
    /// the pooled summary keeps the uncorrected alpha.
    #[arg(long)]
    bonferroni: bool,
    /// Output path for the forest data (JSON records).
    #[arg(long, value_name = "JSON")]
    out_json: PathBuf,
    /// Output path for the forest plot (static SVG).
    #[arg(long, value_name = "SVG")]
    out_svg: PathBuf,
}

pub fn run(cmd: MetaCmd, settings: &Settings) -> Result<()> {
    let MetaCmd::Compare(args) = cmd;

    if args.a.len() != args.b.len() || args.a.len() != args.names.len() {
        return Err(Error::invalid(
            "query sets",
            format!(
                "--a, --b and --names must align: got {} / {} / {}",
                args.a.len(),
                args.b.len(),
                args.names.len()
            ),
        ));
    }
    let mut sorted_names = args.names.clone();
    sorted_names.sort();
    sorted_names.dedup();
    if sorted_names.len() != args.names.len() {
        return Err(Error::invalid(
            "query sets",
            "set names must be unique".to_string(),
        ));
    }

    let alpha = settings.f64("alpha", args.alpha, Some(0.05))?;
    let effect: EffectKind = settings
        .string("effect", args.effect.clone(), Some("raw"))?
        .parse()?;
    let per_set_alpha = if args.bonferroni {
        alpha / args.names.len() as f64
    } else {
        alpha
    };

    let mut comparisons = Vec::with_capacity(args.names.len());
    for ((name, path_a), path_b) in args.names.iter().zip(&args.a).zip(&args.b) {
        let scores_a = read_per_query(path_a)?;
        let scores_b = read_per_query(path_b)?;
        let (comparison, warnings) =
            compare_set_with_effect(name, &scores_a, &scores_b, per_set_alpha, effect)?;
        for warning in warnings {
            eprintln!("warning: {warning}");
        }
        comparisons.push(comparison);
    }
    // Deterministic report order, independent of how the flags were given.
    comparisons.sort_by(|x, y| x.name.cmp(&y.name));

    let summary = summarize(&comparisons, alpha)?;
    ensure_parent(&args.out_json)?;
    ensure_parent(&args.out_svg)?;
    emit_forest(&summary, &args.out_json, &args.out_svg)?;

    let significant = comparisons.iter().filter(|c| c.significant).count();
    println!(
        "pooled effect {} [{}, {}], tau^2 {}, {}/{} sets significant -> {} / {}",
        summary.summary_effect,
        summary.summary_ci.0,
        summary.summary_ci.1,
        summary.tau_squared,
        significant,
        comparisons.len(),
        args.out_json.display(),
        args.out_svg.display()
    );
    Ok(())
}
