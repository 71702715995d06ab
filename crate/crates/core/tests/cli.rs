use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use conerank::data::parse_letor_str;
use conerank::{ConeModel, SynthSpec};

fn conerank(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conerank")).args(args).current_dir(dir).output().unwrap()
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = conerank(args, dir);
    assert!(out.status.success(), "conerank {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn fixture(name: &str) -> String {
    format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

/// `(qid, doc)` rows of a rankings file, in file order.
fn ranking_rows(text: &str) -> Vec<(String, usize)> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f[0].to_string(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn eval_reproduces_fixture_map() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(
        &["eval", "--rankings", &fixture("metrics_5q.rankings.tsv"), "--labels", &fixture("metrics_5q.labels.txt"),
            "--output", "eval.tsv"],
        dir.path(),
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("MAP        0.6479"), "{stdout}");
    // default cutoffs are 1..10
    let report = fs::read_to_string(dir.path().join("eval.tsv")).unwrap();
    for k in 1..=10 {
        assert!(report.contains(&format!("NDCG@{k}")), "missing NDCG@{k}");
    }
    assert!(!report.contains("NDCG@11"));
}

#[test]
fn perfect_ranking_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let labels = parse_letor_str(&fs::read_to_string(fixture("metrics_5q.labels.txt")).unwrap()).unwrap();
    let mut rows = String::from("#qid\trank\tdoc\tvotes\n");
    // queries without a relevant document score 0 by convention; leave them out
    let judged: Vec<_> = labels.queries.iter().filter(|q| q.relevances.iter().any(|&r| r > 0)).collect();
    assert_eq!(judged.len(), 4);
    let mut lines = String::new();
    for q in &judged {
        lines.push_str(&fs::read_to_string(fixture("metrics_5q.labels.txt")).unwrap().lines()
            .filter(|l| l.split_whitespace().nth(1) == Some(&format!("qid:{}", q.query_id)[..]))
            .map(|l| format!("{l}\n")).collect::<String>());
        let mut order: Vec<usize> = (0..q.len()).collect();
        order.sort_by_key(|&d| std::cmp::Reverse(q.relevances[d]));
        for (r, d) in order.iter().enumerate() {
            rows.push_str(&format!("{}\t{}\t{d}\t0\n", q.query_id, r + 1));
        }
    }
    fs::write(dir.path().join("perfect.tsv"), rows).unwrap();
    fs::write(dir.path().join("judged.txt"), lines).unwrap();
    let out = ok(
        &["eval", "--rankings", "perfect.tsv", "--labels", "judged.txt", "--cutoffs", "1,5"],
        dir.path(),
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("MAP        1.0000"), "{stdout}");
    assert!(stdout.contains("NDCG@5     1.0000"), "{stdout}");
}

#[test]
fn synth_files_round_trip_without_residual() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["synth", "--dim", "10", "--k-true", "3", "--queries", "50", "--noise", "0", "--seed", "5", "--output",
            "train.txt", "--truth-out", "truth.tsv"],
        dir.path(),
    );
    let data = parse_letor_str(&fs::read_to_string(dir.path().join("train.txt")).unwrap()).unwrap();
    let spec = SynthSpec { dim: 10, k_true: 3, num_queries: 50, docs_per_query: 10, noise_std: 0.0, seed: 5 };
    let direct = conerank::synth_generate(&spec).unwrap();
    assert_eq!(data.dim, 10);
    assert_eq!(data.queries.len(), 50);
    let mut worst = 0.0f64;
    for (a, b) in data.queries.iter().zip(&direct.dataset.queries) {
        assert_eq!(a.relevances, b.relevances);
        for (x, y) in a.docs.iter().zip(&b.docs) {
            worst = worst.max((x - y).amax());
        }
    }
    assert!(worst < 1e-8, "file round trip residual {worst:e}");
}

#[test]
fn cli_rankings_match_library() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        &["synth", "--dim", "5", "--k-true", "2", "--queries", "12", "--test-queries", "4", "--docs", "5", "--seed", "3",
            "--output", "train.txt", "--test-output", "test.txt"],
        d,
    );
    ok(&["train", "--train", "train.txt", "--model-out", "model.txt", "-k", "2", "--epochs", "10"], d);
    ok(&["rank", "--model", "model.txt", "--test", "test.txt", "--output", "rank.tsv"], d);

    let model = ConeModel::load(&d.join("model.txt")).unwrap();
    let test = parse_letor_str(&fs::read_to_string(d.join("test.txt")).unwrap()).unwrap();
    let mut expected = Vec::new();
    for q in &test.queries {
        for doc in model.rank(&q.docs).unwrap().ordered_doc_indices {
            expected.push((q.query_id.clone(), doc));
        }
    }
    assert_eq!(ranking_rows(&fs::read_to_string(d.join("rank.tsv")).unwrap()), expected);
}

#[test]
fn single_document_query_ranks_trivially() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("train.txt"),
        "2 qid:1 1:1 2:0\n0 qid:1 1:0 2:1\n1 qid:1 1:0.5 2:0.5\n1 qid:2 1:0.7 2:0.1\n0 qid:2 1:0.1 2:0.6\n",
    )
    .unwrap();
    fs::write(d.join("one.txt"), "0 qid:9 1:0.3 2:0.3\n").unwrap();
    ok(&["train", "--train", "train.txt", "--model-out", "model.txt", "-k", "2", "--epochs", "5"], d);
    ok(&["rank", "--model", "model.txt", "--test", "one.txt", "--output", "rank.tsv"], d);
    assert_eq!(ranking_rows(&fs::read_to_string(d.join("rank.tsv")).unwrap()), vec![("9".to_string(), 0)]);
}

#[test]
fn bad_input_exits_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.txt"), "1 qid:1 1:0.5\nnot-a-label qid:1 1:0.2\n").unwrap();
    let out = conerank(&["train", "--train", "bad.txt", "--model-out", "m.txt"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let out = conerank(&["rank", "--model", "missing.txt", "--test", "bad.txt", "--output", "r.tsv"], d);
    assert_eq!(out.status.code(), Some(2));

    // more features than the model knows about
    fs::write(d.join("train.txt"), "1 qid:1 1:1 2:0\n0 qid:1 1:0 2:1\n").unwrap();
    fs::write(d.join("wide.txt"), "1 qid:1 1:1 2:0 3:4\n0 qid:1 1:0 2:1\n").unwrap();
    ok(&["train", "--train", "train.txt", "--model-out", "m.txt", "-k", "2", "--epochs", "3"], d);
    let out = conerank(&["rank", "--model", "m.txt", "--test", "wide.txt", "--output", "r.tsv"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("features"));

    // K larger than N
    let out = conerank(&["train", "--train", "train.txt", "--model-out", "m.txt", "-k", "3"], d);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn spectrum_lists_every_eigenvalue_in_descending_order() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--dim", "6", "--k-true", "2", "--queries", "10", "--seed", "1", "--output", "train.txt"], d);
    ok(&["spectrum", "--train", "train.txt", "--output", "spectrum.tsv"], d);
    let text = fs::read_to_string(d.join("spectrum.tsv")).unwrap();
    let values: Vec<f64> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split('\t').next_back().unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 6);
    assert!(values.windows(2).all(|w| w[0] >= w[1]));
    assert!(values.iter().all(|&v| v >= 0.0));
}
