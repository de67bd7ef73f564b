use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nluforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nluforge"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = nluforge(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(String::from)
        .collect()
}

/// Document body after the header line.
fn document(path: &Path) -> Value {
    let text = std::fs::read_to_string(path).unwrap();
    let (head, body) = text.split_once('\n').unwrap();
    assert!(head.starts_with("{\"_provenance\""));
    serde_json::from_str(body).unwrap()
}

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let c = dir.join("c.json");
    std::fs::write(
        &c,
        format!(r#"{{"seed": 7, "corpus": "corpus.jsonl", "output": "out/records.jsonl"{extra}}}"#),
    )
    .unwrap();
    c
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = nluforge(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn missing_config_is_a_usage_error() {
    let out = nluforge(&["synthesize", "--config", "/nonexistent/c.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_corpus_line_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("corpus.jsonl"), "{\"task\": \"NER\"}\n").unwrap();
    let c = write_config(dir.path(), "");
    let out = nluforge(&["synthesize", "--config", p(&c)]);
    assert_eq!(out.status.code(), Some(1));
    let report: Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert!(report["error"].as_str().unwrap().contains("line 1"));
}

#[test]
fn synthesize_then_mix() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&[
        "generate",
        "--n",
        "100",
        "--seed",
        "7",
        "--out",
        p(&d.join("corpus.jsonl")),
    ]);
    let c = write_config(d, r#", "dictionary_out": "out/dict.json""#);
    ok(&["synthesize", "--config", p(&c)]);
    let records = d.join("out/records.jsonl");
    let first = lines(&records);
    assert!(first[0].starts_with("{\"_provenance\""));
    let stats = document(&d.join("out/records.jsonl.stats.json"));
    assert_eq!(stats["total"].as_u64().unwrap() as usize, first.len() - 1);
    let table = ok(&["stats", "--records", p(&records)]);
    assert!(table.contains(&format!("{}", first.len() - 1)));
    let dict = document(&d.join("out/dict.json"));
    assert!(!dict["entries"].as_array().unwrap().is_empty());

    ok(&["synthesize", "--config", p(&c), "--workers", "4"]);
    assert_eq!(lines(&records), first);

    let mixed = d.join("mixed.jsonl");
    ok(&[
        "mix",
        "--total",
        "60",
        "--seed",
        "7",
        "--records",
        p(&records),
        "--out",
        p(&mixed),
    ]);
    assert_eq!(lines(&mixed).len(), 61);
    let s = document(&d.join("mixed.jsonl.stats.json"));
    assert_eq!(s["total"], 60);

    let out = nluforge(&[
        "mix",
        "--total",
        "100000",
        "--seed",
        "7",
        "--records",
        p(&records),
        "--out",
        p(&mixed),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pools too small"));
}

#[test]
fn mix_plan_of_one_hundred() {
    let plan: Value = serde_json::from_str(&ok(&["mix", "--total", "100", "--seed", "0"])).unwrap();
    let counts: Vec<(String, u64)> = plan["per_task_counts"]
        .as_object()
        .unwrap()
        .iter()
        .map(|(k, v)| (k.clone(), v.as_u64().unwrap()))
        .collect();
    let want = [
        ("NER", 23),
        ("RE", 29),
        ("SPO", 11),
        ("EE", 5),
        ("EET", 3),
        ("EEA", 2),
        ("OPENIE", 4),
        ("KGE", 12),
        ("MRC", 2),
        ("TC", 1),
        ("IG", 8),
    ];
    let want: Vec<(String, u64)> = want.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    assert_eq!(counts, want);
}

#[test]
fn ingest_conll_and_build_dictionary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("train.conll"),
        "EU B-ORG\nrejects O\nGerman B-MISC\ncall O\n\nPeter B-PER\nBlackburn I-PER\n",
    )
    .unwrap();
    ok(&[
        "ingest",
        "--conll",
        p(&d.join("train.conll")),
        "--out",
        p(&d.join("c.jsonl")),
        "--source",
        "toy",
    ]);
    let l = lines(&d.join("c.jsonl"));
    assert_eq!(l.len(), 3);
    let s: Value = serde_json::from_str(&l[2]).unwrap();
    assert_eq!(s["id"], "toy:000001");
    ok(&[
        "build-dict",
        "--corpus",
        p(&d.join("c.jsonl")),
        "--out",
        p(&d.join("d.json")),
        "--seed",
        "1",
    ]);
    let summary = ok(&["inspect-dict", "--dict", p(&d.join("d.json"))]);
    assert!(summary.contains("3 entries"));
    let entry = ok(&[
        "inspect-dict",
        "--dict",
        p(&d.join("d.json")),
        "--task",
        "NER",
        "--label",
        "PER",
    ]);
    assert!(entry.contains("Peter Blackburn"));
}

#[test]
fn evaluate_gold_outputs_score_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&[
        "generate",
        "--n",
        "200",
        "--seed",
        "3",
        "--out",
        p(&d.join("corpus.jsonl")),
    ]);
    let c = write_config(d, "");
    ok(&["synthesize", "--config", p(&c)]);
    let records = d.join("out/records.jsonl");
    let outputs: String = lines(&records)[1..]
        .iter()
        .map(|l| {
            let r: Value = serde_json::from_str(l).unwrap();
            format!(
                "{}\n",
                serde_json::json!({"id": r["id"], "output": r["target"]})
            )
        })
        .collect();
    std::fs::write(d.join("outputs.jsonl"), outputs).unwrap();
    let table = ok(&[
        "evaluate",
        "--records",
        p(&records),
        "--name",
        "toy-re",
        "--task",
        "RE",
        "--outputs",
        p(&d.join("outputs.jsonl")),
        "--out",
        p(&d.join("report.json")),
    ]);
    assert!(table.contains("1.0000"), "{table}");
    let report = document(&d.join("report.json"));
    assert_eq!(report["parse_failures"], 0);
}

#[test]
fn replay_without_cache_entries_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&[
        "generate",
        "--n",
        "30",
        "--seed",
        "3",
        "--out",
        p(&d.join("corpus.jsonl")),
    ]);
    ok(&[
        "build-dict",
        "--corpus",
        p(&d.join("corpus.jsonl")),
        "--out",
        p(&d.join("d.json")),
        "--seed",
        "3",
    ]);
    std::fs::write(d.join("cache.jsonl"), "").unwrap();
    let out = nluforge(&[
        "enrich-dict",
        "--dict",
        p(&d.join("d.json")),
        "--out",
        p(&d.join("e.json")),
        "--cache",
        p(&d.join("cache.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no cached response"));
    let stats = ok(&["cache-admin", "stats", "--cache", p(&d.join("cache.jsonl"))]);
    assert!(stats.starts_with("0 lines"));
}
