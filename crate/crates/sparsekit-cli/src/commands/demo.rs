use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use sparsekit::bm25::{Bm25Index, Bm25Params};
use sparsekit::distill::{
    attach_scores, ensemble, rescore, sample_negatives, NegativePolicy, RescoreTarget,
};
use sparsekit::encoder::{encode, save_checkpoint, score, EncoderMode, EncoderParams, Side};
use sparsekit::error::{Error, Result};
use sparsekit::index::{flops_metric, InvertedIndex};
use sparsekit::io::{
    write_group_skeletons, write_pair_scores, write_per_query, write_qrels, write_run,
    write_teacher_scores, write_training_groups, write_vectors,
};
use sparsekit::loss::LossWeights;
use sparsekit::meta::{compare_set, emit_forest, summarize};
use sparsekit::metrics::{aggregate, evaluate, MetricSpec};
use sparsekit::rerank::rerank_topk;
use sparsekit::synth::{generate, teacher_scores, SynthConfig};
use sparsekit::train::{train, write_trace, TrainConfig};
use sparsekit::types::{PairScores, Run, SparseVector};

use crate::commands::map_ordered;
use crate::settings::Settings;

#[derive(Args)]
pub struct DemoArgs {
    /// Seed controlling every random choice in the pipeline; the same seed
    /// always produces a byte-identical output tree.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory the artifacts are written to.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

const SEARCH_K: usize = 50;
const RERANK_K: usize = 20;
const TEACHERS: usize = 3;
const META_SETS: usize = 5;

pub fn run(args: DemoArgs, settings: &Settings) -> Result<()> {
    let seed = settings.u64("seed", args.seed, None)?;
    let threads = settings.threads();
    let out = &args.out;
    for sub in ["corpus", "runs", "distill", "train", "encoded", "eval", "meta"] {
        std::fs::create_dir_all(out.join(sub)).map_err(|e| Error::io(out.join(sub), e))?;
    }

    // 1. Synthetic collection.
    let data = generate(&SynthConfig::default(), seed)?;
    let docs: BTreeMap<String, SparseVector> = data.docs.iter().cloned().collect();
    let queries: BTreeMap<String, SparseVector> = data.queries.iter().cloned().collect();
    write_vectors(
        data.docs.iter().map(|(id, v)| (id.as_str(), v)),
        out.join("corpus/docs.jsonl"),
    )?;
    write_vectors(
        data.queries.iter().map(|(id, v)| (id.as_str(), v)),
        out.join("corpus/queries.jsonl"),
    )?;
    write_qrels(&data.qrels, out.join("corpus/qrels.txt"))?;
    println!(
        "[1/7] synthesized {} docs, {} queries, {} judgments",
        data.docs.len(),
        data.queries.len(),
        data.qrels.iter().count()
    );

    // 2. BM25 baseline run.
    let bm25 = Bm25Index::build(data.docs.iter().cloned())?;
    let params = Bm25Params::default();
    let bm25_run = search_run(
        threads,
        &data.queries,
        |query| Ok(bm25.search(query, params, SEARCH_K)),
        "bm25",
    )?;
    write_run(&bm25_run, out.join("runs/bm25.run"))?;
    println!("[2/7] bm25 baseline over {} queries", bm25_run.num_queries());

    // 3. Distillation signal: negatives, synthetic teachers, ensemble,
    //    rescore, attach.
    let policy = NegativePolicy::new(5, 5, SEARCH_K, seed)?;
    let positives = data.qrels.positive_docs(1);
    let (skeletons, warnings) = sample_negatives(&bm25_run, &positives, &policy);
    for warning in &warnings {
        eprintln!("warning: {warning}");
    }
    write_group_skeletons(&skeletons, out.join("distill/skeletons.jsonl"))?;

    let pairs: Vec<(String, String)> = skeletons
        .iter()
        .flat_map(|g| {
            g.positives
                .iter()
                .chain(&g.negatives)
                .map(|d| (g.query_id.clone(), d.clone()))
        })
        .collect();
    let table = teacher_scores(&queries, &docs, &pairs, TEACHERS, seed)?;
    write_teacher_scores(&table, out.join("distill/teachers.tsv"))?;
    let combined = ensemble(&table)?;
    write_pair_scores(&combined, out.join("distill/ensemble.tsv"))?;
    let rescored = rescore(&combined, RescoreTarget::new(12.0, 3.0)?)?;
    write_pair_scores(&rescored, out.join("distill/rescored.tsv"))?;
    let groups = attach_scores(&skeletons, &rescored)?;
    write_training_groups(&groups, out.join("distill/groups.jsonl"))?;
    println!(
        "[3/7] distilled {} training groups from {} teacher columns",
        groups.len(),
        TEACHERS
    );

    // 4. Train one encoder per mode, encode, index, retrieve.
    let vocab_size = SynthConfig::default().vocab_size as usize;
    let config = TrainConfig {
        weights: LossWeights::new(1.0, 0.05, 0.01, 0.01)?,
        learning_rate: 0.05,
        epochs: 2,
        batch_size: 8,
        negatives_per_query: Some(8),
        seed,
        shuffle: true,
    };
    let mut model_runs: Vec<(String, Run)> = Vec::new();
    let mut flops_lines: Vec<String> = Vec::new();
    let mut full_params: Option<EncoderParams> = None;
    for mode in [EncoderMode::Full, EncoderMode::Lexical, EncoderMode::Doc] {
        let initial = EncoderParams::init(vocab_size, mode, seed)?;
        let (trained, trace) = train(initial, &groups, &all_vectors(&docs, &queries), &config)?;
        save_checkpoint(&trained, out.join(format!("train/{mode}.ckpt.json")))?;
        write_trace(&trace, out.join(format!("train/{mode}.trace.tsv")))?;

        let enc_docs = encode_all(threads, &data.docs, &trained, Side::Doc)?;
        let enc_queries = encode_all(threads, &data.queries, &trained, Side::Query)?;
        write_vectors(
            enc_docs.iter().map(|(id, v)| (id.as_str(), v)),
            out.join(format!("encoded/{mode}.docs.jsonl")),
        )?;
        write_vectors(
            enc_queries.iter().map(|(id, v)| (id.as_str(), v)),
            out.join(format!("encoded/{mode}.queries.jsonl")),
        )?;

        let index_dir = out.join(format!("index/{mode}"));
        std::fs::create_dir_all(&index_dir).map_err(|e| Error::io(&index_dir, e))?;
        let index = InvertedIndex::build(enc_docs.iter().cloned())?;
        index.save(index_dir.join("index.json"))?;

        let run = search_run(
            threads,
            &enc_queries,
            |query| Ok(index.search(query, SEARCH_K)),
            &mode.to_string(),
        )?;
        write_run(&run, out.join(format!("runs/{mode}.run")))?;

        let query_vectors: Vec<SparseVector> =
            enc_queries.iter().map(|(_, v)| v.clone()).collect();
        let doc_vectors: Vec<SparseVector> = enc_docs.iter().map(|(_, v)| v.clone()).collect();
        let flops = flops_metric(&query_vectors, &doc_vectors)?;
        flops_lines.push(format!("{mode}\t{flops}"));

        if mode == EncoderMode::Full {
            full_params = Some(trained);
        }
        model_runs.push((mode.to_string(), run));
        println!("[4/7] trained + retrieved with the {mode} encoder");
    }
    let mut flops_file = std::fs::File::create(out.join("flops.tsv"))
        .map_err(|e| Error::io(out.join("flops.tsv"), e))?;
    for line in &flops_lines {
        writeln!(flops_file, "{line}").map_err(|e| Error::io(out.join("flops.tsv"), e))?;
    }

    // 5. Re-rank the BM25 head with the full model's scores.
    let full_params = full_params.expect("full mode is always trained");
    let rerank_scores = model_pair_scores(threads, &bm25_run, &queries, &docs, &full_params)?;
    write_pair_scores(&rerank_scores, out.join("distill/full-model-scores.tsv"))?;
    let reranked = rerank_topk(&bm25_run, &rerank_scores, RERANK_K)?.with_tag("bm25-full-rerank");
    write_run(&reranked, out.join("runs/reranked.run"))?;
    println!("[5/7] reranked the bm25 top-{RERANK_K} with full-model scores");

    // 6. Evaluate every system on every metric.
    let mut systems: Vec<(String, &Run)> = vec![("bm25".to_string(), &bm25_run)];
    for (name, run) in &model_runs {
        systems.push((name.clone(), run));
    }
    systems.push(("reranked".to_string(), &reranked));
    let metrics: [(&str, &str); 4] = [
        ("ndcg10", "ndcg@10"),
        ("ndcgstar10", "ndcg_star@10"),
        ("mrr10", "mrr@10"),
        ("success5", "success@5"),
    ];
    let mut summary_lines = vec!["system\tmetric\tmean".to_string()];
    for (system, run) in &systems {
        for (file_stem, metric_name) in &metrics {
            let spec: MetricSpec = metric_name.parse()?;
            let scores = evaluate(run, &data.qrels, spec, 1)?;
            write_per_query(&scores, out.join(format!("eval/{system}.{file_stem}.tsv")))?;
            summary_lines.push(format!("{system}\t{metric_name}\t{}", aggregate(&scores)?));
        }
    }
    let summary_path = out.join("eval/summary.tsv");
    let mut summary_file =
        std::fs::File::create(&summary_path).map_err(|e| Error::io(&summary_path, e))?;
    for line in &summary_lines {
        writeln!(summary_file, "{line}").map_err(|e| Error::io(&summary_path, e))?;
    }
    println!("[6/7] evaluated {} systems on {} metrics", systems.len(), metrics.len());

    // 7. Meta-analysis: full model vs bm25 on ndcg@10 across query subsets.
    let full_run = &model_runs[0].1;
    let spec: MetricSpec = "ndcg@10".parse()?;
    let full_scores = evaluate(full_run, &data.qrels, spec, 1)?;
    let bm25_scores = evaluate(&bm25_run, &data.qrels, spec, 1)?;
    let mut comparisons = Vec::new();
    for set in 0..META_SETS {
        let name = format!("set{set}");
        let pick = |scores: &BTreeMap<String, f64>| -> BTreeMap<String, f64> {
            data.queries
                .iter()
                .enumerate()
                .filter(|(i, _)| i % META_SETS == set)
                .filter_map(|(_, (q, _))| scores.get(q).map(|s| (q.clone(), *s)))
                .collect()
        };
        let set_full = pick(&full_scores);
        let set_bm25 = pick(&bm25_scores);
        write_per_query(&set_full, out.join(format!("meta/full.{name}.tsv")))?;
        write_per_query(&set_bm25, out.join(format!("meta/bm25.{name}.tsv")))?;
        let (comparison, warnings) = compare_set(&name, &set_full, &set_bm25, 0.05)?;
        for warning in warnings {
            eprintln!("warning: {warning}");
        }
        comparisons.push(comparison);
    }
    let summary = summarize(&comparisons, 0.05)?;
    emit_forest(
        &summary,
        out.join("meta/forest.json"),
        out.join("meta/forest.svg"),
    )?;
    println!(
        "[7/7] meta-analysis: pooled ndcg@10 delta {:.4} [{:.4}, {:.4}] vs bm25",
        summary.summary_effect, summary.summary_ci.0, summary.summary_ci.1
    );
    println!("demo artifacts written to {}", out.display());
    Ok(())
}

fn all_vectors(
    docs: &BTreeMap<String, SparseVector>,
    queries: &BTreeMap<String, SparseVector>,
) -> BTreeMap<String, SparseVector> {
    let mut all = docs.clone();
    for (id, vector) in queries {
        all.insert(id.clone(), vector.clone());
    }
    all
}

fn search_run<F>(
    threads: usize,
    queries: &[(String, SparseVector)],
    search: F,
    tag: &str,
) -> Result<Run>
where
    F: Fn(&SparseVector) -> Result<Vec<(String, f64)>> + Sync,
{
    let rankings = map_ordered(threads, queries, |(_, vector)| search(vector))?;
    let entries = queries
        .iter()
        .zip(rankings)
        .flat_map(|((query_id, _), ranking)| {
            ranking
                .into_iter()
                .map(move |(doc, score)| (query_id.clone(), doc, score))
        });
    Run::from_entries(tag, entries)
}

fn encode_all(
    threads: usize,
    items: &[(String, SparseVector)],
    params: &EncoderParams,
    side: Side,
) -> Result<Vec<(String, SparseVector)>> {
    let encoded = map_ordered(threads, items, |(_, counts)| Ok(encode(params, counts, side)))?;
    Ok(items
        .iter()
        .map(|(id, _)| id.clone())
        .zip(encoded)
        .collect())
}

fn model_pair_scores(
    threads: usize,
    run: &Run,
    queries: &BTreeMap<String, SparseVector>,
    docs: &BTreeMap<String, SparseVector>,
    params: &EncoderParams,
) -> Result<PairScores> {
    let query_ids: Vec<String> = run.queries().map(str::to_string).collect();
    let per_query = map_ordered(threads, &query_ids, |query_id| {
        let query_counts = queries
            .get(query_id)
            .ok_or_else(|| Error::MissingVector(query_id.clone()))?;
        let ranking = run.ranking(query_id).unwrap_or(&[]);
        let mut scored = BTreeMap::new();
        for (doc_id, _) in ranking {
            let doc_counts = docs
                .get(doc_id)
                .ok_or_else(|| Error::MissingVector(doc_id.clone()))?;
            scored.insert(doc_id.clone(), score(params, query_counts, doc_counts));
        }
        Ok(scored)
    })?;
    Ok(query_ids.into_iter().zip(per_query).collect())
}
