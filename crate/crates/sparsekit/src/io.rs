//! Readers and writers for the on-disk formats.
//!
//! - Run files: `qid Q0 docid rank score tag`, whitespace-separated, UTF-8,
//!   scores printed with 6 decimal places.
//! - Qrels: `qid 0 docid grade`.
//! - Sparse vectors / token counts: JSON lines, each
//!   `{"id": "...", "vector": {"<termid>": weight, ...}}`.
//! - Teacher scores: TSV `qid<TAB>docid<TAB>s1<TAB>...<TAB>sK` with a header
//!   row naming the teachers.
//! - Pair scores: TSV `qid<TAB>docid<TAB>score` (header optional on read).
//! - Per-query scores: TSV `qid<TAB>score` (header optional on read).
//! - Training groups: JSON lines, each
//!   `{"query_id": ..., "positives": [...], "negatives": [...],
//!     "scores": {...}, "shortfall": n}` where `scores` and `shortfall`
//!   are optional on read (`scores` required by [`read_training_groups`]).
//!
//! Parse errors name the file and 1-based line number. Every writer emits a
//! canonical ordering so that equal values serialize to identical bytes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{
    GroupSkeleton, PairScores, Qrels, Run, SparseVector, TeacherScoreTable, TrainingGroup,
};

/// Iterates non-blank lines of a text file as (1-based line number, line).
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((idx + 1, line));
        }
    }
    Ok(out)
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn parse_f64(path: &Path, line_no: usize, field: &str, what: &str) -> Result<f64> {
    let value: f64 = field
        .parse()
        .map_err(|_| Error::parse(path, line_no, format!("non-numeric {what} {field:?}")))?;
    if !value.is_finite() {
        return Err(Error::parse(
            path,
            line_no,
            format!("non-finite {what} {field:?}"),
        ));
    }
    Ok(value)
}

/// Reads a run file. Stored ranks are ignored; each query's list is re-sorted
/// by descending score with ties broken by ascending doc id. The tag is taken
/// from the first line; an empty file yields an empty run with an empty tag.
pub fn read_run(path: impl AsRef<Path>) -> Result<Run> {
    let path = path.as_ref();
    let mut tag: Option<String> = None;
    let mut entries = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 6 columns, got {}", cols.len()),
            ));
        }
        cols[3].parse::<u64>().map_err(|_| {
            Error::parse(path, line_no, format!("non-numeric rank {:?}", cols[3]))
        })?;
        let score = parse_f64(path, line_no, cols[4], "score")?;
        if tag.is_none() {
            tag = Some(cols[5].to_string());
        }
        entries.push((cols[0].to_string(), cols[2].to_string(), score));
    }
    Run::from_entries(tag.unwrap_or_default(), entries)
}

/// Writes a run file with 1-based consecutive ranks and 6-decimal scores.
pub fn write_run(run: &Run, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for (query, ranking) in run.iter() {
        for (rank, (doc, score)) in ranking.iter().enumerate() {
            writeln!(w, "{query} Q0 {doc} {} {score:.6} {}", rank + 1, run.tag())
                .map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a qrels file (`qid 0 docid grade`). The second column is ignored.
/// Negative grades and duplicate (query, doc) pairs are errors.
pub fn read_qrels(path: impl AsRef<Path>) -> Result<Qrels> {
    let path = path.as_ref();
    let mut entries = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 4 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 4 columns, got {}", cols.len()),
            ));
        }
        let grade: u32 = cols[3].parse().map_err(|_| {
            Error::parse(
                path,
                line_no,
                format!("grade {:?} is not a non-negative integer", cols[3]),
            )
        })?;
        entries.push((cols[0].to_string(), cols[2].to_string(), grade));
    }
    Qrels::from_entries(entries)
}

pub fn write_qrels(qrels: &Qrels, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for (query, doc, grade) in qrels.iter() {
        writeln!(w, "{query} 0 {doc} {grade}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(serde::Deserialize)]
struct VectorRecord {
    id: String,
    vector: BTreeMap<String, f64>,
}

/// Reads a JSONL vector file. Returns the records in file order plus the
/// number of zero-or-negative entries that were dropped. Non-finite weights
/// and duplicate ids are errors.
pub fn read_vectors(path: impl AsRef<Path>) -> Result<(Vec<(String, SparseVector)>, usize)> {
    let path = path.as_ref();
    let mut out: Vec<(String, SparseVector)> = Vec::new();
    let mut seen: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
    let mut dropped = 0usize;
    for (line_no, line) in read_lines(path)? {
        let record: VectorRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId(record.id));
        }
        let mut entries = Vec::with_capacity(record.vector.len());
        for (key, weight) in record.vector {
            let term: u32 = key.parse().map_err(|_| {
                Error::parse(path, line_no, format!("term id {key:?} is not an integer"))
            })?;
            if !weight.is_finite() {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("non-finite weight for term {term}"),
                ));
            }
            if weight <= 0.0 {
                dropped += 1;
            } else {
                entries.push((term, weight));
            }
        }
        let vector = SparseVector::from_entries(entries)
            .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        out.push((record.id, vector));
    }
    Ok((out, dropped))
}

/// Writes vectors as JSON lines with term keys in ascending numeric order.
/// Weights are printed exactly (shortest round-tripping decimal).
pub fn write_vectors<'a, I>(records: I, path: impl AsRef<Path>) -> Result<()>
where
    I: IntoIterator<Item = (&'a str, &'a SparseVector)>,
{
    let path = path.as_ref();
    let mut w = create(path)?;
    for (id, vector) in records {
        let id_json =
            serde_json::to_string(id).map_err(|e| Error::Json { path: path.into(), source: e })?;
        let body: Vec<String> = vector
            .iter()
            .map(|(term, weight)| format!("\"{term}\":{weight}"))
            .collect();
        writeln!(w, "{{\"id\":{id_json},\"vector\":{{{}}}}}", body.join(","))
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a teacher-score TSV. The first line must be a header
/// `qid<TAB>docid<TAB><name1>...<nameK>` naming at least one teacher.
pub fn read_teacher_scores(path: impl AsRef<Path>) -> Result<TeacherScoreTable> {
    let path = path.as_ref();
    let lines = read_lines(path)?;
    let Some(((_, header), rows)) = lines.split_first() else {
        return Err(Error::Empty("teacher score file"));
    };
    let header_cols: Vec<&str> = header.split('\t').collect();
    if header_cols.len() < 3 {
        return Err(Error::parse(
            path,
            1,
            "header must be qid<TAB>docid<TAB>teacher names".to_string(),
        ));
    }
    let teacher_names: Vec<String> = header_cols[2..].iter().map(|s| s.to_string()).collect();
    let k = teacher_names.len();
    let mut entries = Vec::with_capacity(rows.len());
    for (line_no, line) in rows {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != k + 2 {
            return Err(Error::parse(
                path,
                *line_no,
                format!("expected {} columns, got {}", k + 2, cols.len()),
            ));
        }
        let mut scores = Vec::with_capacity(k);
        for field in &cols[2..] {
            scores.push(parse_f64(path, *line_no, field, "score")?);
        }
        entries.push((cols[0].to_string(), cols[1].to_string(), scores));
    }
    TeacherScoreTable::from_entries(teacher_names, entries)
}

pub fn write_teacher_scores(table: &TeacherScoreTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    writeln!(w, "qid\tdocid\t{}", table.teacher_names().join("\t"))
        .map_err(|e| Error::io(path, e))?;
    for (query, doc, scores) in table.iter() {
        let row: Vec<String> = scores.iter().map(|s| format!("{s}")).collect();
        writeln!(w, "{query}\t{doc}\t{}", row.join("\t")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a `qid<TAB>docid<TAB>score` TSV. A first line whose third column
/// does not parse as a number is treated as a header and skipped.
pub fn read_pair_scores(path: impl AsRef<Path>) -> Result<PairScores> {
    let path = path.as_ref();
    let mut out: PairScores = BTreeMap::new();
    for (pos, (line_no, line)) in read_lines(path)?.iter().enumerate() {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::parse(
                path,
                *line_no,
                format!("expected 3 columns, got {}", cols.len()),
            ));
        }
        if pos == 0 && cols[2].parse::<f64>().is_err() {
            continue; // header row
        }
        let score = parse_f64(path, *line_no, cols[2], "score")?;
        if out
            .entry(cols[0].to_string())
            .or_default()
            .insert(cols[1].to_string(), score)
            .is_some()
        {
            return Err(Error::DuplicatePair {
                query: cols[0].to_string(),
                doc: cols[1].to_string(),
            });
        }
    }
    Ok(out)
}

/// Writes pair scores with a `qid\tdocid\tscore` header and exact
/// (round-tripping) decimal scores.
pub fn write_pair_scores(scores: &PairScores, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    writeln!(w, "qid\tdocid\tscore").map_err(|e| Error::io(path, e))?;
    for (query, docs) in scores {
        for (doc, score) in docs {
            writeln!(w, "{query}\t{doc}\t{score}").map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a `qid<TAB>score` TSV. A first line whose second column does not
/// parse as a number is treated as a header and skipped.
pub fn read_per_query(path: impl AsRef<Path>) -> Result<BTreeMap<String, f64>> {
    let path = path.as_ref();
    let mut out = BTreeMap::new();
    for (pos, (line_no, line)) in read_lines(path)?.iter().enumerate() {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 2 {
            return Err(Error::parse(
                path,
                *line_no,
                format!("expected 2 columns, got {}", cols.len()),
            ));
        }
        if pos == 0 && cols[1].parse::<f64>().is_err() {
            continue; // header row
        }
        let score = parse_f64(path, *line_no, cols[1], "score")?;
        if out.insert(cols[0].to_string(), score).is_some() {
            return Err(Error::DuplicateId(cols[0].to_string()));
        }
    }
    Ok(out)
}

pub fn write_per_query(scores: &BTreeMap<String, f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for (query, score) in scores {
        writeln!(w, "{query}\t{score}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a one-token-per-line vocabulary; line i defines term id i.
/// Duplicate tokens are errors.
pub fn read_vocab(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let mut tokens = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (line_no, line) in read_lines(path)? {
        let token = line.trim().to_string();
        if !seen.insert(token.clone()) {
            return Err(Error::parse(
                path,
                line_no,
                format!("duplicate token {token:?}"),
            ));
        }
        tokens.push(token);
    }
    Ok(tokens)
}

#[derive(serde::Serialize, serde::Deserialize)]
struct GroupRecord {
    query_id: String,
    positives: Vec<String>,
    negatives: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scores: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "is_zero")]
    shortfall: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

/// Reads training groups with scores attached. A record without a `scores`
/// field (a bare skeleton) is an error.
pub fn read_training_groups(path: impl AsRef<Path>) -> Result<Vec<TrainingGroup>> {
    let path = path.as_ref();
    let mut groups = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let record: GroupRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        let Some(scores) = record.scores else {
            return Err(Error::parse(
                path,
                line_no,
                format!("group {:?} has no scores attached", record.query_id),
            ));
        };
        groups.push(TrainingGroup::new(
            record.query_id,
            record.positives,
            record.negatives,
            scores,
        )?);
    }
    Ok(groups)
}

/// Reads training-group skeletons, ignoring any attached scores.
pub fn read_group_skeletons(path: impl AsRef<Path>) -> Result<Vec<GroupSkeleton>> {
    let path = path.as_ref();
    let mut skeletons = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let record: GroupRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        skeletons.push(GroupSkeleton {
            query_id: record.query_id,
            positives: record.positives,
            negatives: record.negatives,
            shortfall: record.shortfall,
        });
    }
    Ok(skeletons)
}

pub fn write_group_skeletons(skeletons: &[GroupSkeleton], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for skeleton in skeletons {
        let line = serde_json::to_string(skeleton)
            .map_err(|e| Error::Json { path: path.into(), source: e })?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_training_groups(groups: &[TrainingGroup], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for group in groups {
        let record = GroupRecord {
            query_id: group.query_id().to_string(),
            positives: group.positives().to_vec(),
            negatives: group.negatives().to_vec(),
            scores: Some(group.scores().clone()),
            shortfall: 0,
        };
        let line = serde_json::to_string(&record)
            .map_err(|e| Error::Json { path: path.into(), source: e })?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn tmp(name: &str) -> tempfile::TempDir {
        tempfile::Builder::new().prefix(name).tempdir().unwrap()
    }

    #[test]
    fn run_round_trip_preserves_order_and_scores() {
        let dir = tmp("run");
        let path = dir.path().join("a.run");
        std::fs::write(
            &path,
            "q1 Q0 d7 1 13.250000 sys-alpha\nq1 Q0 d2 2 1.500000 sys-alpha\nq2 Q0 d9 1 0.125000 sys-alpha\n",
        )
        .unwrap();
        let run = read_run(&path).unwrap();
        assert_eq!(run.tag(), "sys-alpha");
        assert_eq!(run.ranking("q1").unwrap()[0], ("d7".to_string(), 13.25));

        let out = dir.path().join("b.run");
        write_run(&run, &out).unwrap();
        let round = read_run(&out).unwrap();
        assert_eq!(run, round);
        let text = std::fs::read_to_string(&out).unwrap();
        assert!(text.starts_with("q1 Q0 d7 1 13.250000 sys-alpha\n"));
    }

    #[test]
    fn run_rejects_wrong_column_count() {
        let dir = tmp("runcols");
        let path = dir.path().join("bad.run");
        std::fs::write(&path, "q1 Q0 d7 1 13.25\n").unwrap();
        let err = read_run(&path).unwrap_err();
        assert!(err.to_string().contains(":1:"), "{err}");
    }

    #[test]
    fn run_reorders_equal_scores_by_doc_id() {
        let dir = tmp("runtie");
        let path = dir.path().join("tie.run");
        std::fs::write(
            &path,
            "q1 Q0 zz 1 1.000000 t\nq1 Q0 aa 2 1.000000 t\n",
        )
        .unwrap();
        let run = read_run(&path).unwrap();
        let docs: Vec<&str> = run.ranking("q1").unwrap().iter().map(|(d, _)| d.as_str()).collect();
        assert_eq!(docs, vec!["aa", "zz"]);
    }

    #[test]
    fn empty_run_file_is_empty_run() {
        let dir = tmp("runempty");
        let path = dir.path().join("empty.run");
        std::fs::write(&path, "").unwrap();
        let run = read_run(&path).unwrap();
        assert_eq!(run.num_queries(), 0);
    }

    #[test]
    fn qrels_negative_grade_is_parse_error() {
        let dir = tmp("qrels");
        let path = dir.path().join("q.qrels");
        std::fs::write(&path, "q1 0 d1 -1\n").unwrap();
        assert!(read_qrels(&path).is_err());

        std::fs::write(&path, "q1 0 d1 2\nq1 0 d2 0\n").unwrap();
        let qrels = read_qrels(&path).unwrap();
        assert!(qrels.has_negative_judgments());
        assert_eq!(qrels.grade("q1", "d1"), Some(2));
    }

    #[test]
    fn qrels_round_trip() {
        let qrels = Qrels::from_entries(vec![
            ("q1".into(), "d1".into(), 2),
            ("q1".into(), "d2".into(), 0),
            ("q2".into(), "d3".into(), 1),
        ])
        .unwrap();
        let dir = tmp("qrelsrt");
        let path = dir.path().join("q.qrels");
        write_qrels(&qrels, &path).unwrap();
        assert_eq!(read_qrels(&path).unwrap(), qrels);
    }

    #[test]
    fn vectors_drop_nonpositive_with_count() {
        let dir = tmp("vec");
        let path = dir.path().join("v.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"d1\",\"vector\":{\"3\":1.5,\"9\":0.25}}\n{\"id\":\"d2\",\"vector\":{\"3\":0.0}}\n",
        )
        .unwrap();
        let (records, dropped) = read_vectors(&path).unwrap();
        assert_eq!(dropped, 1);
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].1.weight(3), Some(1.5));
        assert!(records[1].1.is_empty());
    }

    #[test]
    fn vectors_reject_duplicate_id_and_nonfinite() {
        let dir = tmp("vecdup");
        let path = dir.path().join("v.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"d1\",\"vector\":{\"1\":1.0}}\n{\"id\":\"d1\",\"vector\":{\"2\":1.0}}\n",
        )
        .unwrap();
        assert!(matches!(read_vectors(&path), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn vectors_round_trip_exact() {
        let v1: SparseVector = vec![(3, 1.5), (9, 0.1 + 0.2)].into_iter().collect();
        let v2 = SparseVector::empty();
        let dir = tmp("vecrt");
        let path = dir.path().join("v.jsonl");
        write_vectors(vec![("d1", &v1), ("d2", &v2)], &path).unwrap();
        let (records, dropped) = read_vectors(&path).unwrap();
        assert_eq!(dropped, 0);
        assert_eq!(records, vec![("d1".to_string(), v1), ("d2".to_string(), v2)]);
    }

    #[test]
    fn teacher_scores_read_header_and_rows() {
        let dir = tmp("teach");
        let path = dir.path().join("t.tsv");
        std::fs::write(
            &path,
            "qid\tdocid\tce-a\tce-b\nq1\td1\t1.5\t-0.25\nq1\td2\t0.5\t0.75\n",
        )
        .unwrap();
        let table = read_teacher_scores(&path).unwrap();
        assert_eq!(table.teacher_names(), ["ce-a", "ce-b"]);
        assert_eq!(table.candidates("q1").unwrap()["d1"], vec![1.5, -0.25]);

        let out = dir.path().join("rt.tsv");
        write_teacher_scores(&table, &out).unwrap();
        assert_eq!(read_teacher_scores(&out).unwrap(), table);
    }

    #[test]
    fn pair_scores_header_autodetect() {
        let dir = tmp("pair");
        let with_header = dir.path().join("h.tsv");
        std::fs::write(&with_header, "qid\tdocid\tscore\nq1\td1\t0.5\n").unwrap();
        let without = dir.path().join("n.tsv");
        std::fs::write(&without, "q1\td1\t0.5\n").unwrap();
        assert_eq!(read_pair_scores(&with_header).unwrap(), read_pair_scores(&without).unwrap());
    }

    #[test]
    fn per_query_round_trip() {
        let mut scores = BTreeMap::new();
        scores.insert("q1".to_string(), 0.1 + 0.2);
        scores.insert("q2".to_string(), 1.0 / 3.0);
        let dir = tmp("perq");
        let path = dir.path().join("pq.tsv");
        write_per_query(&scores, &path).unwrap();
        assert_eq!(read_per_query(&path).unwrap(), scores);
    }

    #[test]
    fn group_round_trip_and_skeleton_guard() {
        let scores: BTreeMap<String, f64> = [
            ("p1".to_string(), 9.5),
            ("n1".to_string(), 3.25),
            ("n2".to_string(), 1.0),
        ]
        .into_iter()
        .collect();
        let group = TrainingGroup::new(
            "q1".into(),
            vec!["p1".into()],
            vec!["n1".into(), "n2".into()],
            scores,
        )
        .unwrap();
        let dir = tmp("group");
        let path = dir.path().join("g.jsonl");
        write_training_groups(std::slice::from_ref(&group), &path).unwrap();
        assert_eq!(read_training_groups(&path).unwrap(), vec![group]);

        let skel = GroupSkeleton {
            query_id: "q2".into(),
            positives: vec!["p".into()],
            negatives: vec!["n".into()],
            shortfall: 3,
        };
        let spath = dir.path().join("s.jsonl");
        write_group_skeletons(std::slice::from_ref(&skel), &spath).unwrap();
        assert_eq!(read_group_skeletons(&spath).unwrap(), vec![skel]);
        assert!(read_training_groups(&spath).is_err());
    }

    #[test]
    fn vocab_rejects_duplicates() {
        let dir = tmp("vocab");
        let path = dir.path().join("v.txt");
        std::fs::write(&path, "alpha\nbeta\n").unwrap();
        assert_eq!(read_vocab(&path).unwrap(), vec!["alpha", "beta"]);
        std::fs::write(&path, "alpha\nalpha\n").unwrap();
        assert!(read_vocab(&path).is_err());
    }
}
