mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mknn_cbir::store::{load_index, save_index};

fn cbir(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbir"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        common::write_corpus(dir.path());
        Self { dir }
    }

    fn path(&self, name: &str) -> std::path::PathBuf {
        self.dir.path().join(name)
    }

    fn index(&self, labels: &str) -> std::path::PathBuf {
        let out = self.path(&format!("{labels}.idx"));
        let o = cbir(&[
            "index",
            "--images",
            p(&self.path("images")),
            "--labels",
            p(&self.path(labels)),
            "--out",
            p(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    }
}

#[test]
fn index_reports_counts() {
    let f = Fixture::new();
    let out = f.path("x.idx");
    let o = cbir(&[
        "index",
        "--images",
        p(&f.path("images")),
        "--labels",
        p(&f.path("labels_partial.tsv")),
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("indexed 12 images (10 labeled, 2 unlabeled, 0 skipped)"));
    assert!(fs::read_to_string(&out)
        .unwrap()
        .starts_with("cbir-index\t1\t16\t"));
}

#[test]
fn index_with_corrupt_file() {
    let f = Fixture::new();
    fs::write(f.path("images/zz.png"), b"garbage").unwrap();
    let o = cbir(&[
        "index",
        "--images",
        p(&f.path("images")),
        "--out",
        p(&f.path("x.idx")),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("1 skipped"), "{text}");
    assert!(text.contains("skipped zz.png"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(cbir(&["index", "--out", "x.idx"]).status.code(), Some(2));
    assert_eq!(cbir(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        cbir(&["query", "--index", "a", "--image", "b", "--bogus"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        cbir(&["classify", "--index", "a", "--image", "b", "--method", "svm"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(cbir(&[]).status.code(), Some(2));
    assert_eq!(cbir(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_1() {
    let o = cbir(&[
        "query",
        "--index",
        "/nonexistent.idx",
        "--image",
        "/nonexistent.png",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn query_self_match_and_exhaustive() {
    let f = Fixture::new();
    let idx = f.index("labels_full.tsv");
    let o = cbir(&[
        "query",
        "--index",
        p(&idx),
        "--image",
        p(&f.path("images/g3.png")),
        "--top",
        "3",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "rank\tid\tdistance\tlabel");
    assert_eq!(lines[1], "1\tg3.png\t0.000000\tgreen");
    // top-3 excluding self is g4, g1, g2
    let ids: Vec<&str> = lines[2..]
        .iter()
        .map(|l| l.split('\t').nth(1).unwrap())
        .collect();
    assert_eq!(ids, ["g4.png", "g1.png"]);

    let o = cbir(&[
        "query",
        "--index",
        p(&idx),
        "--image",
        p(&f.path("images/g3.png")),
        "--top",
        "100",
    ]);
    assert_eq!(stdout(&o).lines().count(), 13);
}

#[test]
fn classify_methods_agree_on_clean_fixture() {
    let f = Fixture::new();
    let idx = f.index("labels_full.tsv");
    for method in ["mknn", "knn"] {
        let o = cbir(&[
            "classify",
            "--index",
            p(&idx),
            "--image",
            p(&f.path("images/b1.png")),
            "--k",
            "3",
            "--method",
            method,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(
            stdout(&o).starts_with("predicted: blue\n"),
            "{method}: {}",
            stdout(&o)
        );
    }
}

#[test]
fn classify_single_class_and_k_too_large() {
    let f = Fixture::new();
    let labels = f.path("reds.tsv");
    fs::write(
        &labels,
        "r1.png\tred\nr2.png\tred\nr3.png\tred\nr4.png\tred\n",
    )
    .unwrap();
    let idx = f.path("reds.idx");
    assert!(cbir(&[
        "index",
        "--images",
        p(&f.path("images")),
        "--labels",
        p(&labels),
        "--out",
        p(&idx)
    ])
    .status
    .success());
    let o = cbir(&[
        "classify",
        "--index",
        p(&idx),
        "--image",
        p(&f.path("images/b2.png")),
        "--k",
        "3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(
        text.contains("predicted: red\nconfidence: 1.000000\n"),
        "{text}"
    );

    let o = cbir(&[
        "classify",
        "--index",
        p(&idx),
        "--image",
        p(&f.path("images/b2.png")),
        "--k",
        "5",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("configuration error"));
}

#[test]
fn label_unlabeled_round() {
    let (idx, truth) = common::two_cluster_index(9);
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.idx");
    let output = dir.path().join("out.idx");
    let again = dir.path().join("again.idx");
    save_index(&idx, &input).unwrap();

    let records = dir.path().join("records.jsonl");
    let o = cbir(&[
        "label-unlabeled",
        "--index",
        p(&input),
        "--k",
        "5",
        "--out",
        p(&output),
        "--records",
        p(&records),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("assigned 20 labels"));
    let labeled = load_index(&output).unwrap();
    for (id, label) in &truth {
        assert_eq!(labeled.get(id).unwrap().label_name(), Some(label.as_str()));
    }
    let recs = fs::read_to_string(&records).unwrap();
    assert_eq!(recs.lines().count(), 20);
    for line in recs.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["record"], "assignment");
    }

    let o = cbir(&["label-unlabeled", "--index", p(&output), "--out", p(&again)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("assigned 0 labels"));
    assert_eq!(fs::read(&output).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn label_unlabeled_too_few_labels() {
    let f = Fixture::new();
    let idx = f.index("labels_partial.tsv");
    let o = cbir(&[
        "label-unlabeled",
        "--index",
        p(&idx),
        "--k",
        "10",
        "--out",
        p(&f.path("o.idx")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("at least 11"));
}

#[test]
fn evaluate_prints_frozen_macro() {
    let f = Fixture::new();
    let idx = f.index("labels_full.tsv");
    let records = f.path("eval.jsonl");
    let o = cbir(&[
        "evaluate",
        "--index",
        p(&idx),
        "--top",
        "3",
        "--records",
        p(&records),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains(
        "macro average over 12 queries (0 skipped): recall 0.888889 precision 0.888889 fallout 0.041667"
    ));
    let recs = fs::read_to_string(&records).unwrap();
    let last: serde_json::Value = serde_json::from_str(recs.lines().last().unwrap()).unwrap();
    assert_eq!(last["record"], "macro_average");
    assert_eq!(recs.lines().count(), 13);

    let partial = f.index("labels_partial.tsv");
    assert_eq!(
        cbir(&["evaluate", "--index", p(&partial)]).status.code(),
        Some(1)
    );
}

#[test]
fn compare_is_deterministic_and_quiet_works() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"clusters":[{"center":[0,0],"spread":1,"label":"A","count":50},
                        {"center":[30,0],"spread":1,"label":"B","count":50}],
            "label_noise":0.0,"seed":1}"#,
    )
    .unwrap();
    let a = cbir(&["compare", "--spec", p(&spec), "--k", "3", "--seeds", "2"]);
    let b = cbir(&["compare", "--spec", p(&spec), "--k", "3", "--seeds", "2"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).contains("knn 1.000000 mknn 1.000000"));

    let records = dir.path().join("r.jsonl");
    let q = cbir(&[
        "compare",
        "--spec",
        p(&spec),
        "--k",
        "3",
        "--seeds",
        "2",
        "--quiet",
        "--records",
        p(&records),
    ]);
    assert!(q.status.success());
    assert!(q.stdout.is_empty());
    let kinds: Vec<String> = fs::read_to_string(&records)
        .unwrap()
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["record"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    assert_eq!(kinds, ["seed", "seed", "summary"]);

    fs::write(&spec, "{not json").unwrap();
    assert_eq!(
        cbir(&["compare", "--spec", p(&spec)]).status.code(),
        Some(1)
    );
}
