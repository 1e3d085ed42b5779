//! Cross-query-set comparison of two retrieval systems.
//!
//! Two systems are compared on one query set at a time with a paired two-sided
//! t-interval over per-query score differences ([`compare_set`]). The per-set
//! mean differences are then pooled across query sets with DerSimonian–Laird
//! random-effects weighting ([`summarize`]), and the whole picture is written
//! out as machine-readable rows plus a static SVG forest plot
//! ([`emit_forest`]).

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::io;
use crate::metrics::PerQueryScores;

/// Variance floor applied when some (but not all) query sets have exactly
/// zero sampling variance: a zero variance would give that set infinite
/// inverse-variance weight and poison the pooled estimate with NaNs.
const VARIANCE_FLOOR: f64 = 1e-12;

/// How per-query differences are turned into an effect size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectKind {
    /// The raw per-query score difference (system A minus system B).
    /// Effects are in metric units, e.g. "+0.05 nDCG@10".
    Raw,
    /// Differences divided by their sample standard deviation (Cohen's
    /// d for paired data). Dimensionless; comparable across metrics.
    /// Requires non-zero delta variance.
    Standardized,
}

impl std::str::FromStr for EffectKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(EffectKind::Raw),
            "standardized" => Ok(EffectKind::Standardized),
            other => Err(Error::invalid(
                "effect kind",
                format!("expected \"raw\" or \"standardized\", got {other:?}"),
            )),
        }
    }
}

impl std::fmt::Display for EffectKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EffectKind::Raw => write!(f, "raw"),
            EffectKind::Standardized => write!(f, "standardized"),
        }
    }
}

/// Paired comparison of two systems on a single query set.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySetComparison {
    /// Name of the query set.
    pub name: String,
    /// Number of queries scored by both systems.
    pub n: usize,
    /// Per-query effect (system A minus system B), in ascending query-id
    /// order.
    pub deltas: Vec<f64>,
    /// Mean effect over the paired queries.
    pub mean_delta: f64,
    /// Two-sided `1 - alpha` confidence interval `(low, high)` for the mean
    /// effect. `None` when fewer than two queries are shared, in which case
    /// the comparison carries a point estimate only.
    pub ci: Option<(f64, f64)>,
    /// Squared standard error of the mean effect (the sampling variance used
    /// for pooling). `None` when fewer than two queries are shared.
    pub variance: Option<f64>,
    /// Whether zero lies outside the confidence interval. Always `false`
    /// when there is no interval.
    pub significant: bool,
}

/// Random-effects pooling of several [`QuerySetComparison`]s.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectSummary {
    /// The per-set comparisons, in the order they were given.
    pub sets: Vec<QuerySetComparison>,
    /// Pooled mean effect across query sets.
    pub summary_effect: f64,
    /// Normal-approximation confidence interval `(low, high)` for the pooled
    /// effect at level `1 - alpha`.
    pub summary_ci: (f64, f64),
    /// Estimated between-set variance (DerSimonian–Laird). Zero means the
    /// pooling degenerates to fixed-effect inverse-variance weighting.
    pub tau_squared: f64,
    /// Whether zero lies outside `summary_ci`.
    pub significant: bool,
    /// The alpha level the summary interval was computed at.
    pub alpha: f64,
    /// True when every set had zero sampling variance, in which case the
    /// summary is an unweighted mean with a degenerate point interval.
    pub unweighted_fallback: bool,
    /// Percentage of the pooled weight carried by each set, aligned with
    /// `sets`. `None` for sets that could not be weighted (no variance).
    pub weights_pct: Vec<Option<f64>>,
}

/// One record of the forest-plot data file: either a query set or the
/// pooled summary row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestRow {
    /// `"set"` for per-query-set rows, `"summary"` for the pooled row.
    pub kind: String,
    /// Query-set name, or `"summary"` for the pooled row.
    pub name: String,
    /// Number of paired queries (set rows only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n: Option<usize>,
    /// Mean effect for set rows; pooled effect for the summary row.
    pub effect: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ci_low: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ci_high: Option<f64>,
    /// Whether zero lies outside the row's confidence interval.
    pub significant: bool,
    /// Share of the pooled weight, in percent (weighted set rows only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub weight_pct: Option<f64>,
    /// Between-set variance estimate (summary row only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tau_squared: Option<f64>,
    /// Set when the summary fell back to an unweighted mean because every
    /// set had zero sampling variance (summary row only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub unweighted_fallback: Option<bool>,
}

fn validate_alpha(alpha: f64) -> Result<()> {
    if !alpha.is_finite() || alpha <= 0.0 || alpha >= 1.0 {
        return Err(Error::invalid(
            "alpha",
            format!("significance level must lie strictly between 0 and 1, got {alpha}"),
        ));
    }
    Ok(())
}

/// Two-sided Student-t critical value `t_{1 - alpha/2}` with `df` degrees of
/// freedom.
pub fn t_critical(df: usize, alpha: f64) -> Result<f64> {
    validate_alpha(alpha)?;
    if df == 0 {
        return Err(Error::invalid(
            "degrees of freedom",
            "t critical value needs at least 1 degree of freedom".to_string(),
        ));
    }
    let dist = StudentsT::new(0.0, 1.0, df as f64)
        .map_err(|e| Error::invalid("t distribution", e.to_string()))?;
    Ok(dist.inverse_cdf(1.0 - alpha / 2.0))
}

/// Two-sided standard-normal critical value `z_{1 - alpha/2}`.
pub fn z_critical(alpha: f64) -> Result<f64> {
    validate_alpha(alpha)?;
    let dist = Normal::new(0.0, 1.0)
        .map_err(|e| Error::invalid("normal distribution", e.to_string()))?;
    Ok(dist.inverse_cdf(1.0 - alpha / 2.0))
}

/// Compares two systems on one query set with raw per-query deltas.
///
/// See [`compare_set_with_effect`]; this is the [`EffectKind::Raw`] variant.
pub fn compare_set(
    name: &str,
    scores_a: &PerQueryScores,
    scores_b: &PerQueryScores,
    alpha: f64,
) -> Result<(QuerySetComparison, Vec<String>)> {
    compare_set_with_effect(name, scores_a, scores_b, alpha, EffectKind::Raw)
}

/// Compares two systems on one query set via a paired two-sided t-interval
/// over per-query differences (system A minus system B).
///
/// Only queries scored by both systems are used; a warning string is
/// returned for each side that has extra queries. With fewer than two shared
/// queries the comparison is still produced, but with no interval and
/// `significant = false`. A zero-variance delta set yields the degenerate
/// point interval `[mean, mean]`, which is significant exactly when the mean
/// is non-zero.
///
/// `EffectKind::Standardized` divides the deltas by their sample standard
/// deviation before the same interval machinery runs, so the effect is
/// Cohen's d for paired data; this requires at least two shared queries and
/// a non-zero delta variance.
pub fn compare_set_with_effect(
    name: &str,
    scores_a: &PerQueryScores,
    scores_b: &PerQueryScores,
    alpha: f64,
    effect: EffectKind,
) -> Result<(QuerySetComparison, Vec<String>)> {
    validate_alpha(alpha)?;

    let keys_a: BTreeSet<&String> = scores_a.keys().collect();
    let keys_b: BTreeSet<&String> = scores_b.keys().collect();
    let shared: Vec<&String> = keys_a.intersection(&keys_b).copied().collect();
    if shared.is_empty() {
        return Err(Error::NoSharedQueries);
    }

    let mut warnings = Vec::new();
    let only_a = keys_a.len() - shared.len();
    let only_b = keys_b.len() - shared.len();
    if only_a > 0 {
        warnings.push(format!(
            "query set {name:?}: ignoring {only_a} query(ies) present only in system A"
        ));
    }
    if only_b > 0 {
        warnings.push(format!(
            "query set {name:?}: ignoring {only_b} query(ies) present only in system B"
        ));
    }

    let mut deltas = Vec::with_capacity(shared.len());
    for q in &shared {
        let d = scores_a[*q] - scores_b[*q];
        if !d.is_finite() {
            return Err(Error::NonFinite(format!(
                "score delta for query {q:?} in query set {name:?}"
            )));
        }
        deltas.push(d);
    }

    if effect == EffectKind::Standardized {
        if deltas.len() < 2 {
            return Err(Error::invalid(
                "standardized effect",
                format!("query set {name:?} needs at least 2 shared queries"),
            ));
        }
        let n = deltas.len() as f64;
        let mean = deltas.iter().sum::<f64>() / n;
        let sd = (deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        if sd == 0.0 {
            return Err(Error::invalid(
                "standardized effect",
                format!("query set {name:?} has zero delta variance; use the raw effect instead"),
            ));
        }
        for d in &mut deltas {
            *d /= sd;
        }
    }

    let comparison = comparison_from_deltas(name, deltas, alpha)?;
    Ok((comparison, warnings))
}

fn comparison_from_deltas(name: &str, deltas: Vec<f64>, alpha: f64) -> Result<QuerySetComparison> {
    let n = deltas.len();
    let mean = deltas.iter().sum::<f64>() / n as f64;

    if n < 2 {
        return Ok(QuerySetComparison {
            name: name.to_string(),
            n,
            deltas,
            mean_delta: mean,
            ci: None,
            variance: None,
            significant: false,
        });
    }

    let sample_var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let variance = sample_var / n as f64; // squared standard error of the mean
    let se = variance.sqrt();
    let t = t_critical(n - 1, alpha)?;
    let (low, high) = (mean - t * se, mean + t * se);
    Ok(QuerySetComparison {
        name: name.to_string(),
        n,
        deltas,
        mean_delta: mean,
        ci: Some((low, high)),
        variance: Some(variance),
        significant: low > 0.0 || high < 0.0,
    })
}

/// Pools per-set mean effects into a random-effects summary
/// (DerSimonian–Laird).
///
/// Sets without a sampling variance (fewer than two shared queries) are kept
/// in the output for display but carry no weight; at least two weighted sets
/// are required. The between-set variance is
/// `tau^2 = max(0, (Q - df) / C)` from the usual inverse-variance
/// heterogeneity statistic `Q`, and each set is then weighted by
/// `1 / (variance + tau^2)`. The summary interval is the normal
/// approximation at level `1 - alpha`.
///
/// If every weighted set has exactly zero variance the pooled effect falls
/// back to the unweighted mean with a degenerate point interval and the
/// summary is flagged (`unweighted_fallback`). If only some variances are
/// zero they are floored at `1e-12` so the weights stay finite.
pub fn summarize(comparisons: &[QuerySetComparison], alpha: f64) -> Result<EffectSummary> {
    validate_alpha(alpha)?;

    let weighted: Vec<(usize, f64, f64)> = comparisons
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.variance.map(|v| (i, c.mean_delta, v)))
        .collect();
    for (i, mean, var) in &weighted {
        if !mean.is_finite() || !var.is_finite() || *var < 0.0 {
            return Err(Error::invalid(
                "query-set comparison",
                format!(
                    "set {:?} has a non-finite or negative mean/variance",
                    comparisons[*i].name
                ),
            ));
        }
    }
    if weighted.len() < 2 {
        return Err(Error::NotEnoughSets(weighted.len()));
    }

    let mut weights_pct: Vec<Option<f64>> = vec![None; comparisons.len()];

    if weighted.iter().all(|(_, _, v)| *v == 0.0) {
        // Every set is a point estimate: inverse-variance weights are
        // undefined, so report the plain unweighted mean and say so.
        let k = weighted.len() as f64;
        let mean = weighted.iter().map(|(_, m, _)| m).sum::<f64>() / k;
        for (i, _, _) in &weighted {
            weights_pct[*i] = Some(100.0 / k);
        }
        return Ok(EffectSummary {
            sets: comparisons.to_vec(),
            summary_effect: mean,
            summary_ci: (mean, mean),
            tau_squared: 0.0,
            significant: mean != 0.0,
            alpha,
            unweighted_fallback: true,
            weights_pct,
        });
    }

    // DerSimonian–Laird: fixed-effect weights first, then the method-of-
    // moments between-set variance, then re-weight.
    let floored: Vec<(usize, f64, f64)> = weighted
        .iter()
        .map(|&(i, m, v)| (i, m, v.max(VARIANCE_FLOOR)))
        .collect();
    let sum_w: f64 = floored.iter().map(|(_, _, v)| 1.0 / v).sum();
    let sum_w2: f64 = floored.iter().map(|(_, _, v)| (1.0 / v).powi(2)).sum();
    let fixed_mean: f64 = floored.iter().map(|(_, m, v)| m / v).sum::<f64>() / sum_w;
    let q: f64 = floored
        .iter()
        .map(|(_, m, v)| (m - fixed_mean).powi(2) / v)
        .sum();
    let df = (floored.len() - 1) as f64;
    let c = sum_w - sum_w2 / sum_w;
    let tau_squared = ((q - df) / c).max(0.0);

    let sum_w_star: f64 = floored.iter().map(|(_, _, v)| 1.0 / (v + tau_squared)).sum();
    let summary_effect: f64 = floored
        .iter()
        .map(|(_, m, v)| m / (v + tau_squared))
        .sum::<f64>()
        / sum_w_star;
    let se = (1.0 / sum_w_star).sqrt();
    let z = z_critical(alpha)?;
    let (low, high) = (summary_effect - z * se, summary_effect + z * se);

    for (i, _, v) in &floored {
        weights_pct[*i] = Some(100.0 / (v + tau_squared) / sum_w_star);
    }

    Ok(EffectSummary {
        sets: comparisons.to_vec(),
        summary_effect,
        summary_ci: (low, high),
        tau_squared,
        significant: low > 0.0 || high < 0.0,
        alpha,
        unweighted_fallback: false,
        weights_pct,
    })
}

/// Flattens a summary into forest-plot records: one per set, then the
/// pooled summary row.
pub fn forest_rows(summary: &EffectSummary) -> Vec<ForestRow> {
    let mut rows = Vec::with_capacity(summary.sets.len() + 1);
    for (set, weight) in summary.sets.iter().zip(&summary.weights_pct) {
        rows.push(ForestRow {
            kind: "set".to_string(),
            name: set.name.clone(),
            n: Some(set.n),
            effect: set.mean_delta,
            ci_low: set.ci.map(|(low, _)| low),
            ci_high: set.ci.map(|(_, high)| high),
            significant: set.significant,
            weight_pct: *weight,
            tau_squared: None,
            unweighted_fallback: None,
        });
    }
    rows.push(ForestRow {
        kind: "summary".to_string(),
        name: "summary".to_string(),
        n: None,
        effect: summary.summary_effect,
        ci_low: Some(summary.summary_ci.0),
        ci_high: Some(summary.summary_ci.1),
        significant: summary.significant,
        weight_pct: None,
        tau_squared: Some(summary.tau_squared),
        unweighted_fallback: Some(summary.unweighted_fallback),
    });
    rows
}

/// Writes the forest-plot data (a JSON array of [`ForestRow`]s) and a static
/// SVG forest plot.
pub fn emit_forest(
    summary: &EffectSummary,
    data_path: impl AsRef<Path>,
    svg_path: impl AsRef<Path>,
) -> Result<()> {
    let data_path = data_path.as_ref();
    let svg_path = svg_path.as_ref();

    let rows = forest_rows(summary);
    let mut out = io::create(data_path)?;
    serde_json::to_writer_pretty(&mut out, &rows).map_err(|e| Error::Json {
        path: data_path.to_path_buf(),
        source: e,
    })?;
    writeln!(out).map_err(|e| Error::io(data_path, e))?;
    out.flush().map_err(|e| Error::io(data_path, e))?;

    let svg = render_svg(summary);
    let mut out = io::create(svg_path)?;
    out.write_all(svg.as_bytes())
        .map_err(|e| Error::io(svg_path, e))?;
    out.flush().map_err(|e| Error::io(svg_path, e))?;
    Ok(())
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(ch),
        }
    }
    out
}

/// Formats a number for plot labels: fixed precision with trailing zeros
/// trimmed.
fn fmt_label(v: f64) -> String {
    let mut s = format!("{v:.4}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".to_string();
    }
    s
}

fn render_svg(summary: &EffectSummary) -> String {
    const WIDTH: f64 = 860.0;
    const PLOT_X0: f64 = 260.0;
    const PLOT_X1: f64 = 620.0;
    const ROW_H: f64 = 28.0;
    const TOP: f64 = 64.0;

    let sets = &summary.sets;
    let summary_y = TOP + sets.len() as f64 * ROW_H + 16.0;
    let axis_y = summary_y + 34.0;
    let height = axis_y + 64.0;

    // The x-domain spans every plotted value plus zero, with padding.
    let mut lo = 0.0_f64;
    let mut hi = 0.0_f64;
    {
        let mut expand = |v: f64| {
            lo = lo.min(v);
            hi = hi.max(v);
        };
        for set in sets {
            expand(set.mean_delta);
            if let Some((a, b)) = set.ci {
                expand(a);
                expand(b);
            }
        }
        expand(summary.summary_effect);
        expand(summary.summary_ci.0);
        expand(summary.summary_ci.1);
    }
    let span = hi - lo;
    let pad = if span < 1e-9 {
        (lo.abs().max(hi.abs()) * 0.5).max(0.05)
    } else {
        span * 0.08
    };
    let (lo, hi) = (lo - pad, hi + pad);
    let xmap = |v: f64| PLOT_X0 + (v - lo) / (hi - lo) * (PLOT_X1 - PLOT_X0);

    let mut svg = String::new();
    let _ = writeln!(svg, r##"<?xml version="1.0" encoding="UTF-8"?>"##);
    let _ = writeln!(
        svg,
        r##"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {height}" width="{WIDTH}" height="{height}" font-family="system-ui, sans-serif" font-size="13">"##
    );
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="white"/>"##);

    let confidence = fmt_label((1.0 - summary.alpha) * 100.0);
    let _ = writeln!(
        svg,
        r##"<text x="16" y="26" font-size="15" font-weight="bold" fill="#111">Mean per-query difference (system A - system B) with {confidence}% confidence intervals</text>"##
    );
    let _ = writeln!(
        svg,
        r##"<text x="16" y="{y}" fill="#555">Query set</text>"##,
        y = TOP - 16.0
    );
    let _ = writeln!(
        svg,
        r##"<text x="{x}" y="{y}" text-anchor="end" fill="#555">Effect [{confidence}% CI] (weight)</text>"##,
        x = WIDTH - 16.0,
        y = TOP - 16.0
    );

    // Vertical zero reference line.
    let zx = xmap(0.0);
    let _ = writeln!(
        svg,
        r##"<line x1="{zx:.2}" y1="{y1}" x2="{zx:.2}" y2="{y2}" stroke="#999" stroke-dasharray="4,3"/>"##,
        y1 = TOP - 10.0,
        y2 = axis_y
    );

    for (i, (set, weight)) in sets.iter().zip(&summary.weights_pct).enumerate() {
        let y = TOP + i as f64 * ROW_H + ROW_H / 2.0;
        let name = xml_escape(&set.name);
        let _ = writeln!(svg, r##"<g class="set-row" data-name="{name}">"##);
        let _ = writeln!(
            svg,
            r##"<text x="16" y="{y:.2}" dominant-baseline="middle" fill="#111">{name}</text>"##
        );
        let color = if set.significant { "#1f5fa8" } else { "#767676" };
        match set.ci {
            Some((ci_low, ci_high)) => {
                let (x0, x1, xm) = (xmap(ci_low), xmap(ci_high), xmap(set.mean_delta));
                let _ = writeln!(
                    svg,
                    r##"<line x1="{x0:.2}" y1="{y:.2}" x2="{x1:.2}" y2="{y:.2}" stroke="{color}" stroke-width="1.5"/>"##
                );
                for x in [x0, x1] {
                    let _ = writeln!(
                        svg,
                        r##"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{y1:.2}" stroke="{color}" stroke-width="1.5"/>"##,
                        y0 = y - 5.0,
                        y1 = y + 5.0
                    );
                }
                // Marker area tracks the set's share of the pooled weight.
                let side = 6.0 + 8.0 * (weight.unwrap_or(0.0) / 100.0);
                let _ = writeln!(
                    svg,
                    r##"<rect x="{rx:.2}" y="{ry:.2}" width="{side:.2}" height="{side:.2}" fill="{color}"/>"##,
                    rx = xm - side / 2.0,
                    ry = y - side / 2.0
                );
                let weight_note = match weight {
                    Some(w) => format!(" ({}%)", fmt_label(*w)),
                    None => String::new(),
                };
                let _ = writeln!(
                    svg,
                    r##"<text x="{x}" y="{y:.2}" text-anchor="end" dominant-baseline="middle" fill="#111">{m} [{l}, {h}]{weight_note}</text>"##,
                    x = WIDTH - 16.0,
                    m = fmt_label(set.mean_delta),
                    l = fmt_label(ci_low),
                    h = fmt_label(ci_high)
                );
            }
            None => {
                let xm = xmap(set.mean_delta);
                let _ = writeln!(
                    svg,
                    r##"<circle cx="{xm:.2}" cy="{y:.2}" r="4" fill="none" stroke="{color}" stroke-width="1.5"/>"##
                );
                let _ = writeln!(
                    svg,
                    r##"<text x="{x}" y="{y:.2}" text-anchor="end" dominant-baseline="middle" fill="#111">{m} (no interval, n &lt; 2)</text>"##,
                    x = WIDTH - 16.0,
                    m = fmt_label(set.mean_delta)
                );
            }
        }
        let _ = writeln!(svg, "</g>");
    }

    // Pooled summary row: a diamond spanning the confidence interval.
    let _ = writeln!(
        svg,
        r##"<line x1="16" y1="{y:.2}" x2="{x2}" y2="{y:.2}" stroke="#ccc"/>"##,
        y = summary_y - 14.0,
        x2 = WIDTH - 16.0
    );
    let (s_low, s_high) = summary.summary_ci;
    let (dx0, dx1, dxm) = (xmap(s_low), xmap(s_high), xmap(summary.summary_effect));
    let color = if summary.significant { "#b3482c" } else { "#767676" };
    let _ = writeln!(svg, r##"<g class="summary-row">"##);
    let _ = writeln!(
        svg,
        r##"<text x="16" y="{summary_y:.2}" dominant-baseline="middle" font-weight="bold" fill="#111">Pooled effect (random effects)</text>"##
    );
    let _ = writeln!(
        svg,
        r##"<polygon points="{dx0:.2},{summary_y:.2} {dxm:.2},{yt:.2} {dx1:.2},{summary_y:.2} {dxm:.2},{yb:.2}" fill="{color}"/>"##,
        yt = summary_y - 8.0,
        yb = summary_y + 8.0
    );
    let _ = writeln!(
        svg,
        r##"<text x="{x}" y="{summary_y:.2}" text-anchor="end" dominant-baseline="middle" font-weight="bold" fill="#111">{m} [{l}, {h}]</text>"##,
        x = WIDTH - 16.0,
        m = fmt_label(summary.summary_effect),
        l = fmt_label(s_low),
        h = fmt_label(s_high)
    );
    let _ = writeln!(svg, "</g>");

    // Horizontal axis with five evenly spaced ticks.
    let _ = writeln!(
        svg,
        r##"<line x1="{PLOT_X0}" y1="{axis_y:.2}" x2="{PLOT_X1}" y2="{axis_y:.2}" stroke="#333"/>"##
    );
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let x = xmap(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{axis_y:.2}" x2="{x:.2}" y2="{y1:.2}" stroke="#333"/>"##,
            y1 = axis_y + 5.0
        );
        let _ = writeln!(
            svg,
            r##"<text x="{x:.2}" y="{y:.2}" text-anchor="middle" fill="#333">{v}</text>"##,
            y = axis_y + 20.0,
            v = fmt_label(v)
        );
    }

    let mut note = format!(
        "between-set variance \u{03c4}\u{00b2} = {}",
        fmt_label(summary.tau_squared)
    );
    if summary.unweighted_fallback {
        note.push_str("; unweighted fallback (every set had zero variance)");
    }
    let _ = writeln!(
        svg,
        r##"<text x="16" y="{y:.2}" fill="#555">{note}</text>"##,
        y = axis_y + 44.0
    );

    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use statrs::distribution::Normal;

    fn scores(pairs: &[(&str, f64)]) -> PerQueryScores {
        pairs
            .iter()
            .map(|(q, s)| (q.to_string(), *s))
            .collect()
    }

    /// Critical values frozen from an independent implementation
    /// (scipy.stats 1.x: `t.ppf(1 - alpha/2, df)` / `norm.ppf`).
    #[test]
    fn critical_values_match_reference_implementation() {
        let cases = [
            (1, 0.05, 12.706204736432095),
            (1, 0.01, 63.65674116287399),
            (4, 0.05, 2.7764451051977987),
            (4, 0.01, 4.604094871415897),
            (9, 0.05, 2.2621571628540993),
            (9, 0.01, 3.2498355415921254),
            (19, 0.05, 2.093024054408263),
            (19, 0.01, 2.860934606449914),
            (29, 0.05, 2.045229642132703),
            (29, 0.01, 2.756385903670335),
            (49, 0.05, 2.0095752371292397),
            (49, 0.01, 2.67995197363155),
        ];
        for (df, alpha, expected) in cases {
            let got = t_critical(df, alpha).unwrap();
            assert!(
                (got - expected).abs() < 1e-9,
                "t({df}, {alpha}) = {got}, expected {expected}"
            );
        }
        assert!((z_critical(0.05).unwrap() - 1.959963984540054).abs() < 1e-9);
        assert!((z_critical(0.01).unwrap() - 2.5758293035489004).abs() < 1e-9);
    }

    #[test]
    fn paired_interval_matches_reference_implementation() {
        // Frozen from scipy: deltas [0.05, 0.12, -0.02, 0.08, 0.03, 0.10].
        let b = scores(&[
            ("q1", 0.50),
            ("q2", 0.40),
            ("q3", 0.60),
            ("q4", 0.30),
            ("q5", 0.20),
            ("q6", 0.10),
        ]);
        let mut a = b.clone();
        for (q, d) in [
            ("q1", 0.05),
            ("q2", 0.12),
            ("q3", -0.02),
            ("q4", 0.08),
            ("q5", 0.03),
            ("q6", 0.10),
        ] {
            *a.get_mut(q).unwrap() += d;
        }
        let (cmp, warnings) = compare_set("dev", &a, &b, 0.05).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(cmp.n, 6);
        assert!((cmp.mean_delta - 0.06).abs() < 1e-12);
        let (low, high) = cmp.ci.unwrap();
        assert!((low - 0.006489071939106458).abs() < 1e-9);
        assert!((high - 0.11351092806089354).abs() < 1e-9);
        assert!(cmp.significant);
    }

    #[test]
    fn identical_systems_are_not_significant() {
        let a = scores(&[("q1", 0.3), ("q2", 0.7), ("q3", 0.5)]);
        let (cmp, _) = compare_set("self", &a, &a, 0.05).unwrap();
        assert_eq!(cmp.mean_delta, 0.0);
        assert_eq!(cmp.ci, Some((0.0, 0.0)));
        assert!(!cmp.significant);
    }

    #[test]
    fn constant_nonzero_delta_gives_degenerate_significant_interval() {
        // Dyadic values keep the per-query delta exactly constant, so the
        // sample variance is exactly zero.
        let b = scores(&[("q1", 0.25), ("q2", 0.5), ("q3", 0.75)]);
        let a: PerQueryScores = b.iter().map(|(q, s)| (q.clone(), s + 0.125)).collect();
        let (cmp, _) = compare_set("const", &a, &b, 0.05).unwrap();
        assert_eq!(cmp.mean_delta, 0.125);
        assert_eq!(cmp.ci, Some((0.125, 0.125)));
        assert!(cmp.significant);
    }

    #[test]
    fn single_shared_query_yields_no_interval() {
        let a = scores(&[("q1", 0.8), ("q9", 0.1)]);
        let b = scores(&[("q1", 0.5), ("q8", 0.2)]);
        let (cmp, warnings) = compare_set("tiny", &a, &b, 0.05).unwrap();
        assert_eq!(cmp.n, 1);
        assert!((cmp.mean_delta - 0.3).abs() < 1e-15);
        assert_eq!(cmp.ci, None);
        assert_eq!(cmp.variance, None);
        assert!(!cmp.significant);
        assert_eq!(warnings.len(), 2);
    }

    #[test]
    fn disjoint_query_sets_error() {
        let a = scores(&[("q1", 0.8)]);
        let b = scores(&[("q2", 0.5)]);
        assert!(matches!(
            compare_set("none", &a, &b, 0.05),
            Err(Error::NoSharedQueries)
        ));
    }

    #[test]
    fn extra_queries_are_ignored_with_warnings() {
        let mut a = scores(&[("q1", 0.5), ("q2", 0.6)]);
        let b = a.clone();
        a.insert("extra".to_string(), 0.9);
        let (cmp, warnings) = compare_set("mismatch", &a, &b, 0.05).unwrap();
        assert_eq!(cmp.n, 2);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("system A"));
    }

    #[test]
    fn comparison_is_antisymmetric() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.gen_range(2..30);
            let mut a = PerQueryScores::new();
            let mut b = PerQueryScores::new();
            for q in 0..n {
                let qid = format!("q{q}");
                a.insert(qid.clone(), rng.gen_range(0.0..1.0));
                b.insert(qid, rng.gen_range(0.0..1.0));
            }
            let (ab, _) = compare_set("s", &a, &b, 0.05).unwrap();
            let (ba, _) = compare_set("s", &b, &a, 0.05).unwrap();
            assert_eq!(ab.mean_delta, -ba.mean_delta);
            let (ab_low, ab_high) = ab.ci.unwrap();
            let (ba_low, ba_high) = ba.ci.unwrap();
            assert_eq!(ab_low, -ba_high);
            assert_eq!(ab_high, -ba_low);
            assert_eq!(ab.significant, ba.significant);
        }
    }

    #[test]
    fn comparison_is_shift_invariant() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let mut a = PerQueryScores::new();
        let mut b = PerQueryScores::new();
        for q in 0..20 {
            let qid = format!("q{q}");
            a.insert(qid.clone(), rng.gen_range(0.0..1.0));
            b.insert(qid, rng.gen_range(0.0..1.0));
        }
        let (base, _) = compare_set("s", &a, &b, 0.05).unwrap();
        // An exactly representable shift keeps the per-query deltas
        // bit-identical, so the whole comparison must match.
        let shift = 0.25;
        let a2: PerQueryScores = a.iter().map(|(q, s)| (q.clone(), s + shift)).collect();
        let b2: PerQueryScores = b.iter().map(|(q, s)| (q.clone(), s + shift)).collect();
        let (shifted, _) = compare_set("s", &a2, &b2, 0.05).unwrap();
        assert_eq!(base.deltas, shifted.deltas);
        assert_eq!(base.ci, shifted.ci);
    }

    #[test]
    fn standardized_effect_is_scale_free() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let mut a = PerQueryScores::new();
        let mut b = PerQueryScores::new();
        for q in 0..15 {
            let qid = format!("q{q}");
            a.insert(qid.clone(), rng.gen_range(0.0..1.0));
            b.insert(qid, rng.gen_range(0.0..1.0));
        }
        let (raw, _) =
            compare_set_with_effect("s", &a, &b, 0.05, EffectKind::Standardized).unwrap();
        // Scaling both systems by 4 (exact in binary) scales raw deltas but
        // must leave the standardized effect unchanged.
        let a4: PerQueryScores = a.iter().map(|(q, s)| (q.clone(), s * 4.0)).collect();
        let b4: PerQueryScores = b.iter().map(|(q, s)| (q.clone(), s * 4.0)).collect();
        let (scaled, _) =
            compare_set_with_effect("s", &a4, &b4, 0.05, EffectKind::Standardized).unwrap();
        assert!((raw.mean_delta - scaled.mean_delta).abs() < 1e-12);
        let (low_a, high_a) = raw.ci.unwrap();
        let (low_b, high_b) = scaled.ci.unwrap();
        assert!((low_a - low_b).abs() < 1e-12);
        assert!((high_a - high_b).abs() < 1e-12);
    }

    #[test]
    fn standardized_effect_rejects_zero_variance() {
        let b = scores(&[("q1", 0.25), ("q2", 0.5)]);
        let a: PerQueryScores = b.iter().map(|(q, s)| (q.clone(), s + 0.125)).collect();
        assert!(compare_set_with_effect("s", &a, &b, 0.05, EffectKind::Standardized).is_err());
    }

    fn comparison(name: &str, mean: f64, variance: f64) -> QuerySetComparison {
        QuerySetComparison {
            name: name.to_string(),
            n: 10,
            deltas: Vec::new(),
            mean_delta: mean,
            ci: Some((mean - variance.sqrt(), mean + variance.sqrt())),
            variance: Some(variance),
            significant: false,
        }
    }

    /// Frozen from an independent implementation of DerSimonian–Laird
    /// pooling (numpy): five sets with known means and variances.
    #[test]
    fn pooling_matches_reference_implementation() {
        let sets = vec![
            comparison("s1", 0.12, 0.0010),
            comparison("s2", 0.05, 0.0020),
            comparison("s3", 0.20, 0.0008),
            comparison("s4", 0.08, 0.0030),
            comparison("s5", 0.15, 0.0012),
        ];
        let summary = summarize(&sets, 0.05).unwrap();
        assert!((summary.tau_squared - 0.002082464454976303).abs() < 1e-12);
        assert!((summary.summary_effect - 0.12837754036857887).abs() < 1e-12);
        assert!((summary.summary_ci.0 - 0.07632323614166323).abs() < 1e-12);
        assert!((summary.summary_ci.1 - 0.18043184459549452).abs() < 1e-12);
        assert!(summary.significant);
        assert!(!summary.unweighted_fallback);
        let total: f64 = summary.weights_pct.iter().map(|w| w.unwrap()).sum();
        assert!((total - 100.0).abs() < 1e-9);
    }

    #[test]
    fn identical_sets_pool_to_their_common_mean() {
        let sets = vec![
            comparison("s1", 0.07, 0.001),
            comparison("s2", 0.07, 0.001),
            comparison("s3", 0.07, 0.001),
        ];
        let summary = summarize(&sets, 0.05).unwrap();
        assert!((summary.summary_effect - 0.07).abs() < 1e-15);
        assert_eq!(summary.tau_squared, 0.0);
        assert!(summary.summary_ci.0 <= 0.07 && 0.07 <= summary.summary_ci.1);
    }

    #[test]
    fn opposite_effects_with_equal_variance_cancel() {
        let sets = vec![comparison("s1", 0.04, 0.001), comparison("s2", -0.04, 0.001)];
        let summary = summarize(&sets, 0.05).unwrap();
        assert!(summary.summary_effect.abs() < 1e-15);
        assert!(!summary.significant);
    }

    #[test]
    fn zero_heterogeneity_degenerates_to_fixed_effect_pooling() {
        // Frozen from numpy: Q < df here, so tau^2 clamps to zero and the
        // pooled effect must equal plain inverse-variance weighting.
        let sets = vec![
            comparison("s1", 0.10, 0.01),
            comparison("s2", 0.11, 0.01),
            comparison("s3", 0.105, 0.01),
        ];
        let summary = summarize(&sets, 0.05).unwrap();
        assert_eq!(summary.tau_squared, 0.0);
        assert!((summary.summary_effect - 0.105).abs() < 1e-12);
        let se = 0.05773502691896258;
        let z = 1.959963984540054;
        assert!((summary.summary_ci.0 - (0.105 - z * se)).abs() < 1e-12);
        assert!((summary.summary_ci.1 - (0.105 + z * se)).abs() < 1e-12);
    }

    #[test]
    fn all_zero_variances_fall_back_to_unweighted_mean() {
        let sets = vec![
            comparison("s1", 0.10, 0.0),
            comparison("s2", 0.20, 0.0),
            comparison("s3", 0.30, 0.0),
        ];
        let summary = summarize(&sets, 0.05).unwrap();
        assert!(summary.unweighted_fallback);
        assert!((summary.summary_effect - 0.2).abs() < 1e-15);
        assert_eq!(summary.summary_ci, (summary.summary_effect, summary.summary_effect));
        assert!(summary.significant);

        let balanced = vec![comparison("s1", 0.1, 0.0), comparison("s2", -0.1, 0.0)];
        let summary = summarize(&balanced, 0.05).unwrap();
        assert_eq!(summary.summary_effect, 0.0);
        assert!(!summary.significant);
    }

    #[test]
    fn mixed_zero_variances_are_floored_not_nan() {
        let sets = vec![
            comparison("s1", 0.10, 0.0),
            comparison("s2", 0.30, 0.001),
        ];
        let summary = summarize(&sets, 0.05).unwrap();
        assert!(!summary.unweighted_fallback);
        assert!(summary.summary_effect.is_finite());
        assert!(summary.summary_ci.0.is_finite() && summary.summary_ci.1.is_finite());
        assert!(summary.summary_effect >= 0.10 && summary.summary_effect <= 0.30);
        assert!(summary.tau_squared >= 0.0);
    }

    #[test]
    fn too_few_weighted_sets_error() {
        let one = vec![comparison("s1", 0.1, 0.001)];
        assert!(matches!(summarize(&one, 0.05), Err(Error::NotEnoughSets(1))));

        let mut no_variance = comparison("s2", 0.1, 0.001);
        no_variance.variance = None;
        no_variance.ci = None;
        let mixed = vec![comparison("s1", 0.1, 0.001), no_variance];
        assert!(matches!(
            summarize(&mixed, 0.05),
            Err(Error::NotEnoughSets(1))
        ));
    }

    #[test]
    fn invalid_alpha_is_rejected() {
        let a = scores(&[("q1", 0.5), ("q2", 0.6)]);
        for alpha in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(compare_set("s", &a, &a, alpha).is_err());
        }
    }

    #[test]
    fn forest_rows_cover_each_set_plus_summary() {
        let sets = vec![comparison("b", 0.1, 0.001), comparison("a", 0.2, 0.002)];
        let summary = summarize(&sets, 0.05).unwrap();
        let rows = forest_rows(&summary);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].kind, "set");
        assert_eq!(rows[0].name, "b");
        assert_eq!(rows[1].name, "a");
        assert_eq!(rows[2].kind, "summary");
        assert_eq!(rows[2].tau_squared, Some(summary.tau_squared));
        assert_eq!(rows[2].effect, summary.summary_effect);
    }

    #[test]
    fn single_set_summary_emits_two_records() {
        // A hand-built one-set summary still serializes as one set row plus
        // the summary row.
        let set = comparison("only", 0.1, 0.001);
        let summary = EffectSummary {
            sets: vec![set.clone()],
            summary_effect: set.mean_delta,
            summary_ci: set.ci.unwrap(),
            tau_squared: 0.0,
            significant: set.ci.unwrap().0 > 0.0,
            alpha: 0.05,
            unweighted_fallback: false,
            weights_pct: vec![Some(100.0)],
        };
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("forest.json");
        let svg = dir.path().join("forest.svg");
        emit_forest(&summary, &data, &svg).unwrap();
        let text = std::fs::read_to_string(&data).unwrap();
        let rows: Vec<ForestRow> = serde_json::from_str(&text).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].kind, "set");
        assert_eq!(rows[1].kind, "summary");
    }

    #[test]
    fn forest_json_round_trips_exactly() {
        let sets = vec![
            comparison("s1", 0.12, 0.0010),
            comparison("s2", 0.05, 0.0020),
            comparison("s3", 0.20, 0.0008),
        ];
        let summary = summarize(&sets, 0.05).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("forest.json");
        let svg = dir.path().join("forest.svg");
        emit_forest(&summary, &data, &svg).unwrap();

        let text = std::fs::read_to_string(&data).unwrap();
        let rows: Vec<ForestRow> = serde_json::from_str(&text).unwrap();
        assert_eq!(rows, forest_rows(&summary));
        let back = &rows[rows.len() - 1];
        assert!((back.effect - summary.summary_effect).abs() < 1e-9);
        assert!((back.ci_low.unwrap() - summary.summary_ci.0).abs() < 1e-9);
        assert!((back.ci_high.unwrap() - summary.summary_ci.1).abs() < 1e-9);
        assert!((back.tau_squared.unwrap() - summary.tau_squared).abs() < 1e-9);
    }

    /// Minimal XML scanner: checks tag balance, attribute quoting, and that
    /// text content has no raw `<`/`&` outside entities. Sufficient for the
    /// well-formedness of the SVG this module generates.
    fn assert_well_formed_xml(text: &str) {
        let mut stack: Vec<String> = Vec::new();
        let mut chars = text.char_indices().peekable();
        while let Some((i, ch)) = chars.next() {
            if ch != '<' {
                if ch == '&' {
                    let rest = &text[i..];
                    assert!(
                        ["&amp;", "&lt;", "&gt;", "&quot;", "&apos;", "&#"]
                            .iter()
                            .any(|e| rest.starts_with(e)),
                        "bare & at byte {i}"
                    );
                }
                continue;
            }
            let rest = &text[i..];
            let end = rest.find('>').unwrap_or_else(|| panic!("unclosed tag at byte {i}"));
            let tag = &rest[1..end];
            // Quotes must pair up inside the tag.
            assert_eq!(tag.matches('"').count() % 2, 0, "unbalanced quotes in <{tag}>");
            if let Some(stripped) = tag.strip_prefix('/') {
                let open = stack.pop().unwrap_or_else(|| panic!("stray </{stripped}>"));
                assert_eq!(open, stripped, "mismatched close tag");
            } else if !tag.ends_with('/') && !tag.starts_with('?') && !tag.starts_with('!') {
                let name: String = tag
                    .chars()
                    .take_while(|c| !c.is_whitespace() && *c != '>')
                    .collect();
                stack.push(name);
            }
            // Skip ahead past this tag.
            while let Some(&(j, _)) = chars.peek() {
                if j > i + end {
                    break;
                }
                chars.next();
            }
        }
        assert!(stack.is_empty(), "unclosed tags: {stack:?}");
    }

    #[test]
    fn forest_svg_is_well_formed_with_one_group_per_set() {
        let mut sets = vec![
            comparison("news & blogs <2024>", 0.12, 0.0010),
            comparison("forum \"qa\"", -0.03, 0.0020),
            comparison("web", 0.20, 0.0008),
        ];
        // Include an unweighted set to exercise the no-interval branch.
        sets.push(QuerySetComparison {
            name: "tiny".to_string(),
            n: 1,
            deltas: vec![0.3],
            mean_delta: 0.3,
            ci: None,
            variance: None,
            significant: false,
        });
        let summary = summarize(&sets, 0.05).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("forest.json");
        let svg_path = dir.path().join("forest.svg");
        emit_forest(&summary, &data, &svg_path).unwrap();

        let svg = std::fs::read_to_string(&svg_path).unwrap();
        assert_well_formed_xml(&svg);
        assert_eq!(svg.matches(r##"class="set-row""##).count(), sets.len());
        assert_eq!(svg.matches(r##"class="summary-row""##).count(), 1);
        assert_eq!(svg.matches("<polygon").count(), 1, "one summary diamond");
        assert!(svg.contains("stroke-dasharray"), "zero reference line");
        assert!(svg.contains("news &amp; blogs &lt;2024&gt;"));
    }

    #[test]
    fn degenerate_domain_still_renders() {
        // All effects identical with zero-width intervals: the x-scale must
        // not divide by zero.
        let sets = vec![comparison("s1", 0.0, 0.0), comparison("s2", 0.0, 0.0)];
        let summary = summarize(&sets, 0.05).unwrap();
        let svg = render_svg(&summary);
        assert!(!svg.contains("NaN"));
        assert_well_formed_xml(&svg);
    }

    #[test]
    fn planted_effect_is_recovered_across_seeds() {
        let noise = Normal::new(0.0, 0.03).unwrap();
        let mut hits = 0;
        let trials = 20;
        for seed in 0..trials {
            let mut rng = ChaCha20Rng::seed_from_u64(1000 + seed);
            let mut comparisons = Vec::new();
            for set in 0..8 {
                let mut a = PerQueryScores::new();
                let mut b = PerQueryScores::new();
                for q in 0..30 {
                    let qid = format!("q{q}");
                    let base: f64 = rng.gen_range(0.2..0.6);
                    let delta = 0.05 + rng.sample(noise);
                    b.insert(qid.clone(), base);
                    a.insert(qid, base + delta);
                }
                let (cmp, _) = compare_set(&format!("set{set}"), &a, &b, 0.05).unwrap();
                comparisons.push(cmp);
            }
            let summary = summarize(&comparisons, 0.05).unwrap();
            let (low, high) = summary.summary_ci;
            if low <= 0.05 && 0.05 <= high {
                hits += 1;
            }
        }
        assert!(hits >= 17, "planted effect recovered in only {hits}/{trials} seeds");
    }
}
