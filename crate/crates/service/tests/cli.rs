mod common;

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::sync::OnceLock;

use common::agent;
use common::exposition::parse;
use serde_json::Value;

const FA: &str = env!("CARGO_BIN_EXE_fa");

fn fa(args: &[&str]) -> Output {
    Command::new(FA)
        .args(args)
        .env_remove("FA_PORT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = fa(args);
    assert!(
        out.status.success(),
        "fa {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// A model trained once through the CLI, shared by the other tests.
fn model() -> &'static Path {
    static DIR: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    let (_, path) = DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let metrics = dir.path().join("train.json");
        let out = ok(&[
            "train",
            "--out",
            path.to_str().unwrap(),
            "--metrics",
            metrics.to_str().unwrap(),
        ]);
        assert!(out.contains("validation accuracy"));
        let m: Value = serde_json::from_str(&std::fs::read_to_string(metrics).unwrap()).unwrap();
        assert_eq!(m["train"]["epoch_losses"].as_array().unwrap().len(), 50);
        (dir, path)
    });
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_dataset_paper_synthetic() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&[
        "generate-dataset",
        "--preset",
        "paper-synthetic",
        "--seed",
        "42",
        "--out",
        s(dir.path()),
    ]);
    assert!(out.starts_with("318 images"), "{out}");
    let pngs = std::fs::read_dir(dir.path().join("images"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
        .count();
    assert_eq!(pngs, 318);
    let lines = std::fs::read_to_string(dir.path().join("annotations.jsonl")).unwrap();
    let mut counts = std::collections::BTreeMap::new();
    for l in lines.lines() {
        let v: Value = serde_json::from_str(l).unwrap();
        *counts
            .entry(v["defect_class"].as_str().unwrap().to_string())
            .or_insert(0) += 1;
    }
    assert_eq!(counts["scratch"], 112);
    assert_eq!(counts["particle_contamination"], 106);
    assert_eq!(counts["edge_crack"], 100);
}

#[test]
fn unknown_preset_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = fa(&["generate-dataset", "--preset", "tiny", "--out", s(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("tiny"));
}

#[test]
fn eval_text_and_json() {
    let text = ok(&["eval", "--model", s(model())]);
    assert!(text.contains("Macro avg.") && text.contains("Overall acc."));
    let json: Value = serde_json::from_str(&ok(&["eval", "--model", s(model()), "--report", "json"])).unwrap();
    assert_eq!(json["total"], 140);
    assert!(json["macro_f1"].as_f64().unwrap() >= 0.85);
}

#[test]
fn simulate_then_run_case1_cites_chuck() {
    let dir = tempfile::tempdir().unwrap();
    let telemetry = dir.path().join("telemetry");
    let reports = dir.path().join("reports");
    let out = ok(&[
        "simulate",
        "--scenario",
        "case1_scratch_chuck",
        "--store",
        s(&telemetry),
    ]);
    assert!(out.contains("EQ-INSP-01"));
    let dump = ok(&[
        "telemetry",
        "dump",
        "--store",
        s(&telemetry),
        "--equipment",
        "EQ-INSP-01",
        "--from",
        "2024-03-14T07:14:00Z",
        "--to",
        "2024-03-14T07:16:00Z",
    ]);
    let events: Vec<Value> = dump.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(events.iter().any(|e| e["kind"]["type"] == "alarm"));
    let out = ok(&[
        "run",
        "--scenario",
        "case1_scratch_chuck",
        "--telemetry",
        s(&telemetry),
        "--model",
        s(model()),
        "--report-dir",
        s(&reports),
    ]);
    assert!(out.contains("class: scratch"), "{out}");
    let first = out.lines().find(|l| l.starts_with("hypothesis 1:")).unwrap();
    assert!(first.contains("mechanical contact / chuck"), "{out}");
    assert!(out.contains("chuck_vacuum_pressure"));
    let json_path = out.lines().find_map(|l| l.strip_prefix("report: ")).unwrap();
    let report: Value = serde_json::from_str(&std::fs::read_to_string(json_path).unwrap()).unwrap();
    assert_eq!(report["errors"], serde_json::json!([]));

    let out = ok(&["latency-report", "--reports", s(&reports)]);
    assert!(out.contains("Median (s)") && out.contains("(1 runs)"));
}

#[test]
fn run_with_map_file_and_markdown() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("ring.png");
    fa_core::synth::render(fa_core::DefectClass::RingPattern, &Default::default(), 4)
        .save_png(&map)
        .unwrap();
    let out = ok(&[
        "run",
        "--map",
        s(&map),
        "--equipment",
        "EQ-ETCH-07",
        "--time",
        "2024-03-14T08:00:00Z",
        "--model",
        s(model()),
        "--markdown",
    ]);
    assert!(out.starts_with("# Failure analysis report FA-EQ-ETCH-07-"));
    assert!(out.contains("UNAVAILABLE"), "no telemetry configured");
    let out = fa(&["run", "--map", s(&map), "--model", s(model())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--equipment"));
}

#[test]
fn ablate_writes_one_file_per_condition() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["ablate", "--cases", "5", "--out", s(dir.path()), "--model", s(model())]);
    assert_eq!(out.lines().count(), 2 + 5);
    for cond in ["full", "no_telemetry", "no_retrieval", "baseline"] {
        let v: Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(format!("{cond}.json"))).unwrap()).unwrap();
        assert_eq!(v["condition"], cond);
        let cases = v["cases"].as_array().unwrap();
        assert_eq!(cases.len(), 5);
        assert!(cases.iter().all(|c| !c["hypotheses"].as_array().unwrap().is_empty()));
    }
    assert!(dir.path().join("summary.md").exists());
    assert!(!fa(&["ablate", "--cases", "6", "--out", s(dir.path())]).status.success());
}

#[test]
fn latency_report_over_cases() {
    let out = ok(&[
        "latency-report",
        "--runs",
        "2",
        "--model",
        s(model()),
        "--format",
        "json",
    ]);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["runs"], 10);
    let nodes = v["nodes"].as_array().unwrap();
    assert_eq!(nodes.len(), 5);
    let pct: f64 = nodes.iter().map(|n| n["fraction_pct"].as_f64().unwrap()).sum();
    assert!((pct - 100.0).abs() < 1e-6);
}

#[test]
fn index_add_query_stats() {
    let dir = tempfile::tempdir().unwrap();
    let idx = dir.path().join("cases.idx");
    let map = dir.path().join("edge.png");
    fa_core::synth::render(fa_core::DefectClass::EdgeCrack, &Default::default(), 8)
        .save_png(&map)
        .unwrap();
    ok(&["index", "seed", "--index", s(&idx), "--per-class", "2"]);
    let out = ok(&[
        "index",
        "add",
        "--index",
        s(&idx),
        "--map",
        s(&map),
        "--case-id",
        "CASE-1",
        "--class",
        "edge_crack",
        "--mechanism",
        "dicing blade wear",
        "--time",
        "2024-03-14T08:00:00Z",
    ]);
    assert!(out.contains("19 cases"), "{out}");
    let hits: Vec<Value> = ok(&["index", "query", "--index", s(&idx), "--map", s(&map), "--k", "3"])
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(hits.len(), 3);
    assert_eq!(hits[0]["case_id"], "CASE-1");
    assert!((hits[0]["similarity"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    let stats: Value = serde_json::from_str(&ok(&["index", "stats", "--index", s(&idx), "--compact"])).unwrap();
    assert_eq!(stats["cases"], 19);
    assert_eq!(stats["dimension"], 56);
    assert!(!fa(&[
        "index",
        "add",
        "--index",
        s(&idx),
        "--map",
        s(&map),
        "--case-id",
        "X",
        "--class",
        "donut"
    ])
    .status
    .success());
}

#[test]
fn simulate_serves_hsms_and_ingest_collects() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = Command::new(FA)
        .args([
            "simulate",
            "--scenario",
            "case4_edge_dicing",
            "--port",
            "0",
            "--time-scale",
            "20",
        ])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap().to_string();
    let store = dir.path().join("log");
    let out = ok(&[
        "telemetry",
        "ingest",
        "--connect",
        &addr,
        "--store",
        s(&store),
        "--duration",
        "3",
        "--max-reports",
        "4",
    ]);
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(out.starts_with("EQ-DICE-12: 4 reports"), "{out}");
    let dump = ok(&["telemetry", "dump", "--store", s(&store), "--equipment", "EQ-DICE-12"]);
    assert!(dump.lines().count() >= 4);
}

#[test]
fn serve_port_zero_prints_port_and_answers_metrics() {
    let mut child = Command::new(FA)
        .args(["serve", "--port", "0", "--model", s(model())])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let url = line.trim().strip_prefix("listening on ").unwrap().to_string();
    let port: u16 = url.rsplit(':').next().unwrap().parse().unwrap();
    assert_ne!(port, 0);
    let mut resp = agent().get(&format!("{url}/metrics")).call().unwrap();
    let text = resp.body_mut().read_to_string().unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(parse(&text).unwrap().contains_key("fa_node_duration_seconds"));
}

#[test]
fn missing_subcommand_is_an_error() {
    assert!(!fa(&[]).status.success());
    assert!(!fa(&["simulate", "--scenario", "case1_scratch_chuck"]).status.success());
    assert!(!fa(&["simulate", "--scenario", "/no/such.toml", "--store", "/tmp/x"])
        .status
        .success());
}
