//! Black-box tests of the `sparsekit` binary: exit-code contract, config
//! precedence, golden evaluation fixtures, and thin-wrapper equivalence
//! between subcommand outputs and direct library calls.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sparsekit::bm25::{Bm25Index, Bm25Params};
use sparsekit::io::{
    read_pair_scores, read_qrels, read_run, write_per_query, write_run,
};
use sparsekit::metrics::{evaluate, MetricSpec};
use sparsekit::rerank::rerank_topk;
use sparsekit::types::Run;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sparsekit"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn run_cli(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

/// Parses a two-column per-query TSV into query -> value.
fn read_tsv_map(path: &Path) -> BTreeMap<String, f64> {
    fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
        .lines()
        .map(|line| {
            let (query, value) = line.split_once('\t').expect("two columns");
            (query.to_string(), value.parse::<f64>().expect("numeric"))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Exit codes
// ---------------------------------------------------------------------------

#[test]
fn no_arguments_prints_usage_and_exits_1() {
    let output = run_cli(&[]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("Usage"), "usage text on stderr");
}

#[test]
fn help_exits_0_and_documents_every_format() {
    let output = run_cli(&["--help"]);
    assert_eq!(output.status.code(), Some(0));
    let text = stdout(&output);
    for subcommand in ["index", "bm25", "distill", "train", "eval", "rerank", "meta", "demo"] {
        assert!(text.contains(subcommand), "--help lists {subcommand}");
    }
    // One example line per file format.
    for example in [
        "q1 Q0 doc42 1 12.500000 my-system",
        "q1 0 doc42 2",
        "{\"id\":\"doc42\",\"vector\":{\"3\":1.5,\"17\":0.25}}",
        "query<TAB>doc<TAB>teacherA<TAB>teacherB",
        "q1<TAB>doc42<TAB>1.25",
        "q1<TAB>0.3072",
        "{\"query_id\":\"q1\",\"positives\":[\"d1\"],\"negatives\":[\"d9\"]",
        "{\"version\":1,\"mode\":\"full\",\"vocab_size\":4,\"weights\":[...]}",
        "[{\"kind\":\"set\",\"name\":\"s0\",...}, {\"kind\":\"summary\",...}]",
    ] {
        assert!(text.contains(example), "--help shows example {example:?}");
    }
}

#[test]
fn unknown_flag_is_usage_error() {
    let output = run_cli(&["bm25", "search", "--no-such-flag"]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn missing_clap_required_flag_is_usage_error() {
    // --run is declared required at the parser level.
    let output = run_cli(&["eval", "--qrels", "x", "--metric", "ndcg@10"]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn missing_input_file_is_data_error() {
    let qrels = fixture("fixture.qrels");
    let output = run_cli(&[
        "eval",
        "--run",
        "/nonexistent/path.run",
        "--qrels",
        qrels.to_str().unwrap(),
        "--metric",
        "ndcg@10",
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(
        stderr(&output).contains("/nonexistent/path.run"),
        "error names the offending path"
    );
}

#[test]
fn malformed_run_file_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.run");
    fs::write(&bad, "q01 Q0 d01 1\n").unwrap(); // 4 columns instead of 6
    let output = run_cli(&[
        "eval",
        "--run",
        bad.to_str().unwrap(),
        "--qrels",
        fixture("fixture.qrels").to_str().unwrap(),
        "--metric",
        "ndcg@10",
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("expected 6 columns"));
}

#[test]
fn invalid_metric_name_is_data_error() {
    let output = run_cli(&[
        "eval",
        "--run",
        fixture("fixture.run").to_str().unwrap(),
        "--qrels",
        fixture("fixture.qrels").to_str().unwrap(),
        "--metric",
        "map@10",
    ]);
    assert_eq!(output.status.code(), Some(2));
}

// ---------------------------------------------------------------------------
// Config file precedence
// ---------------------------------------------------------------------------

/// Writes a three-doc, one-query token-count corpus and returns
/// (corpus.jsonl, queries.jsonl) paths.
fn write_tiny_corpus(dir: &Path) -> (PathBuf, PathBuf) {
    let corpus = dir.join("corpus.jsonl");
    fs::write(
        &corpus,
        concat!(
            "{\"id\":\"d1\",\"vector\":{\"0\":3,\"1\":1}}\n",
            "{\"id\":\"d2\",\"vector\":{\"0\":1,\"2\":2}}\n",
            "{\"id\":\"d3\",\"vector\":{\"1\":2,\"2\":1}}\n",
        ),
    )
    .unwrap();
    let queries = dir.join("queries.jsonl");
    fs::write(&queries, "{\"id\":\"q1\",\"vector\":{\"0\":1,\"1\":1}}\n").unwrap();
    (corpus, queries)
}

#[test]
fn required_parameter_missing_from_flags_and_config_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, queries) = write_tiny_corpus(dir.path());
    let out = dir.path().join("out.run");
    let output = run_cli(&[
        "bm25",
        "search",
        "--corpus",
        corpus.to_str().unwrap(),
        "--queries",
        queries.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("k"), "error names the parameter");
}

#[test]
fn config_file_supplies_missing_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, queries) = write_tiny_corpus(dir.path());
    let config = dir.path().join("config.json");
    fs::write(&config, "{\"k\": 2}").unwrap();
    let out = dir.path().join("out.run");
    let output = run_cli(&[
        "--config",
        config.to_str().unwrap(),
        "bm25",
        "search",
        "--corpus",
        corpus.to_str().unwrap(),
        "--queries",
        queries.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));
    let lines = fs::read_to_string(&out).unwrap().lines().count();
    assert_eq!(lines, 2, "config k=2 yields two results");
}

#[test]
fn explicit_flags_override_config_values() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, queries) = write_tiny_corpus(dir.path());
    let config = dir.path().join("config.json");
    fs::write(&config, "{\"k\": 2, \"tag\": \"from-config\"}").unwrap();
    let out = dir.path().join("out.run");
    let output = run_cli(&[
        "--config",
        config.to_str().unwrap(),
        "bm25",
        "search",
        "--corpus",
        corpus.to_str().unwrap(),
        "--queries",
        queries.to_str().unwrap(),
        "--k",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));
    let contents = fs::read_to_string(&out).unwrap();
    assert_eq!(contents.lines().count(), 1, "flag k=1 beats config k=2");
    assert!(
        contents.trim_end().ends_with("from-config"),
        "untouched config values still apply"
    );
}

#[test]
fn malformed_config_file_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, queries) = write_tiny_corpus(dir.path());
    let config = dir.path().join("config.json");
    fs::write(&config, "[1, 2, 3]").unwrap(); // not an object
    let output = run_cli(&[
        "--config",
        config.to_str().unwrap(),
        "bm25",
        "search",
        "--corpus",
        corpus.to_str().unwrap(),
        "--queries",
        queries.to_str().unwrap(),
        "--k",
        "1",
        "--out",
        dir.path().join("out.run").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn zero_threads_is_rejected() {
    let output = run_cli(&[
        "--threads",
        "0",
        "eval",
        "--run",
        fixture("fixture.run").to_str().unwrap(),
        "--qrels",
        fixture("fixture.qrels").to_str().unwrap(),
        "--metric",
        "ndcg@10",
    ]);
    assert_eq!(output.status.code(), Some(2));
}

// ---------------------------------------------------------------------------
// Golden evaluation fixtures
// ---------------------------------------------------------------------------

#[test]
fn eval_matches_golden_per_query_files() {
    let dir = tempfile::tempdir().unwrap();
    for (metric, golden_name) in [
        ("ndcg@10", "ndcg_at_10.tsv"),
        ("ndcg_star@10", "ndcg_star_at_10.tsv"),
        ("mrr@10", "mrr_at_10.tsv"),
        ("success@5", "success_at_5.tsv"),
    ] {
        let per_query = dir.path().join(golden_name);
        let output = run_cli(&[
            "eval",
            "--run",
            fixture("fixture.run").to_str().unwrap(),
            "--qrels",
            fixture("fixture.qrels").to_str().unwrap(),
            "--metric",
            metric,
            "--per-query",
            per_query.to_str().unwrap(),
        ]);
        assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));
        assert!(
            stdout(&output).contains("queries=5"),
            "all judged queries are scored"
        );

        let got = read_tsv_map(&per_query);
        let want = read_tsv_map(&fixture(&format!("golden/{golden_name}")));
        assert_eq!(
            got.keys().collect::<Vec<_>>(),
            want.keys().collect::<Vec<_>>(),
            "{metric}: same query set"
        );
        for (query, want_value) in &want {
            let got_value = got[query];
            assert!(
                (got_value - want_value).abs() <= 1e-12,
                "{metric} {query}: got {got_value}, want {want_value}"
            );
        }
    }
}

// ---------------------------------------------------------------------------
// Thin-wrapper equivalence: subcommand output == direct library calls
// ---------------------------------------------------------------------------

#[test]
fn eval_subcommand_is_thin_wrapper_over_metrics() {
    let dir = tempfile::tempdir().unwrap();

    let cli_out = dir.path().join("cli.tsv");
    let output = run_cli(&[
        "eval",
        "--run",
        fixture("fixture.run").to_str().unwrap(),
        "--qrels",
        fixture("fixture.qrels").to_str().unwrap(),
        "--metric",
        "ndcg_star@10",
        "--per-query",
        cli_out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));

    let run = read_run(fixture("fixture.run")).unwrap();
    let qrels = read_qrels(fixture("fixture.qrels")).unwrap();
    let spec: MetricSpec = "ndcg_star@10".parse().unwrap();
    let scores = evaluate(&run, &qrels, spec, 1).unwrap();
    let lib_out = dir.path().join("lib.tsv");
    write_per_query(&scores, &lib_out).unwrap();

    assert_eq!(
        fs::read(&cli_out).unwrap(),
        fs::read(&lib_out).unwrap(),
        "CLI per-query file is byte-identical to the library's"
    );
}

#[test]
fn bm25_subcommand_is_thin_wrapper_over_bm25_index() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, queries) = write_tiny_corpus(dir.path());

    let cli_out = dir.path().join("cli.run");
    let output = run_cli(&[
        "bm25",
        "search",
        "--corpus",
        corpus.to_str().unwrap(),
        "--queries",
        queries.to_str().unwrap(),
        "--k",
        "3",
        "--out",
        cli_out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));

    let (docs, _) = sparsekit::io::read_vectors(&corpus).unwrap();
    let (query_vectors, _) = sparsekit::io::read_vectors(&queries).unwrap();
    let index = Bm25Index::build(docs).unwrap();
    let params = Bm25Params::new(0.9, 0.4).unwrap();
    let entries = query_vectors.iter().flat_map(|(query_id, vector)| {
        index
            .search(vector, params, 3)
            .into_iter()
            .map(move |(doc, score)| (query_id.clone(), doc, score))
    });
    let run = Run::from_entries("bm25", entries).unwrap();
    let lib_out = dir.path().join("lib.run");
    write_run(&run, &lib_out).unwrap();

    assert_eq!(
        fs::read(&cli_out).unwrap(),
        fs::read(&lib_out).unwrap(),
        "CLI run file is byte-identical to the library's"
    );
}

#[test]
fn rerank_subcommand_is_thin_wrapper_over_rerank_topk() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("base.run");
    fs::write(
        &base,
        concat!(
            "qa Q0 d1 1 9.000000 base\n",
            "qa Q0 d2 2 8.000000 base\n",
            "qa Q0 d3 3 7.000000 base\n",
            "qb Q0 d2 1 6.000000 base\n",
            "qb Q0 d3 2 5.000000 base\n",
        ),
    )
    .unwrap();
    let scores = dir.path().join("scores.tsv");
    fs::write(
        &scores,
        "qa\td1\t1.5\nqa\td2\t3.5\nqb\td2\t0.25\nqb\td3\t0.75\n",
    )
    .unwrap();

    let cli_out = dir.path().join("cli.run");
    let output = run_cli(&[
        "rerank",
        "--run",
        base.to_str().unwrap(),
        "--scores",
        scores.to_str().unwrap(),
        "--k",
        "2",
        "--tag",
        "rr",
        "--out",
        cli_out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));

    let run = read_run(&base).unwrap();
    let pair_scores = read_pair_scores(&scores).unwrap();
    let reranked = rerank_topk(&run, &pair_scores, 2).unwrap().with_tag("rr");
    let lib_out = dir.path().join("lib.run");
    write_run(&reranked, &lib_out).unwrap();

    assert_eq!(
        fs::read(&cli_out).unwrap(),
        fs::read(&lib_out).unwrap(),
        "CLI run file is byte-identical to the library's"
    );
}

#[test]
fn thread_count_does_not_change_bm25_output() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, queries) = write_tiny_corpus(dir.path());
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("t{threads}.run"));
        let output = run_cli(&[
            "--threads",
            threads,
            "bm25",
            "search",
            "--corpus",
            corpus.to_str().unwrap(),
            "--queries",
            queries.to_str().unwrap(),
            "--k",
            "3",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));
        outputs.push(fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}
