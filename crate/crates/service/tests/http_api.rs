mod common;

use std::sync::Arc;

use base64::Engine;
use common::exposition::{histogram_series, parse};
use common::schema::validate;
use common::{agent, model, start};
use fa_core::index::VectorIndex;
use fa_core::pipeline::cases::{builtin_scenario, seed_history};
use fa_core::pipeline::report::REPORT_SCHEMA;
use fa_core::pipeline::{CorrelationTable, ResourceRegistry, NODES};
use fa_core::synth::{render, GeneratorParams};
use fa_core::telemetry::TelemetryLog;
use fa_core::DefectClass;
use fa_service::api::{parse_request, AppState, METRICS_CONTENT_TYPE};
use serde_json::{json, Value};

struct Server {
    url: String,
    state: Arc<AppState>,
    dir: tempfile::TempDir,
}

fn server() -> Server {
    let dir = tempfile::tempdir().unwrap();
    let log = TelemetryLog::open(&dir.path().join("telemetry")).unwrap();
    fa_core::equipment::simulate_into(&builtin_scenario("case1_scratch_chuck").unwrap(), &log).unwrap();
    let index = VectorIndex::in_memory();
    seed_history(&index, &CorrelationTable::builtin(), 6, 3).unwrap();
    let mut registry = ResourceRegistry::default()
        .with_classifier(model())
        .with_index(Arc::new(index))
        .with_telemetry(Arc::new(log));
    registry.config.report_dir = Some(dir.path().join("reports"));
    let state = AppState::new(registry);
    Server {
        url: start(state.clone()),
        state,
        dir,
    }
}

fn post(url: &str, body: &Value) -> (u16, Value) {
    let mut resp = agent().post(&format!("{url}/inspections")).send_json(body).unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_json().unwrap())
}

fn get(url: &str) -> (u16, String) {
    let mut resp = agent().get(url).call().unwrap();
    (resp.status().as_u16(), resp.body_mut().read_to_string().unwrap())
}

fn request(map_path: &std::path::Path) -> Value {
    json!({
        "map_path": map_path,
        "equipment_id": "EQ-INSP-01",
        "lot_id": "LOT-2024-017",
        "wafer_id": "W07",
        "timestamp": "2024-03-14T08:00:00Z",
    })
}

fn scratch_png(dir: &std::path::Path) -> std::path::PathBuf {
    let p = dir.join("scratch.png");
    render(DefectClass::Scratch, &GeneratorParams::default(), 11)
        .save_png(&p)
        .unwrap();
    p
}

#[test]
fn valid_request_returns_schema_valid_report() {
    let s = server();
    let (status, body) = post(&s.url, &request(&scratch_png(s.dir.path())));
    assert_eq!(status, 200, "{body}");
    let report = &body["report"];
    let schema: Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    assert!(validate(&schema, report).is_empty());
    assert_eq!(body["report_id"], report["report_id"]);
    assert_eq!(report["classification"]["defect_class"], "scratch");
    assert_eq!(report["errors"], json!([]));
    let top = &report["hypotheses"][0];
    assert_eq!(top["mechanism"], "mechanical contact / chuck");

    let id = body["report_id"].as_str().unwrap();
    let (status, text) = get(&format!("{}/reports/{id}", s.url));
    assert_eq!(status, 200);
    assert_eq!(&serde_json::from_str::<Value>(&text).unwrap(), report);
    let (status, md) = get(&format!("{}/reports/{id}/markdown", s.url));
    assert_eq!(status, 200);
    assert!(md.starts_with(&format!("# Failure analysis report {id}")));
    assert!(s.dir.path().join("reports").join(format!("{id}.json")).exists());
}

#[test]
fn missing_field_is_named() {
    let s = server();
    let mut body = request(&scratch_png(s.dir.path()));
    body.as_object_mut().unwrap().remove("equipment_id");
    let (status, resp) = post(&s.url, &body);
    assert_eq!(status, 400);
    assert_eq!(resp["errors"][0]["field"], "equipment_id");
    assert!(resp["errors"][0]["message"].as_str().unwrap().contains("equipment_id"));
}

#[test]
fn validation_errors_carry_field_paths() {
    let cases = [
        (
            json!({"equipment_id": 5, "lot_id": "L", "wafer_id": "W", "timestamp": "2024-01-01T00:00:00Z", "map_path": "/x"}),
            vec!["equipment_id"],
        ),
        (
            json!({"equipment_id": " ", "lot_id": "", "wafer_id": "W", "timestamp": "yesterday", "map_path": "/x"}),
            vec!["equipment_id", "lot_id", "timestamp"],
        ),
        (
            json!({"equipment_id": "E", "lot_id": "L", "wafer_id": "W", "timestamp": "2024-01-01T00:00:00Z"}),
            vec!["map_path"],
        ),
        (
            json!({"equipment_id": "E", "lot_id": "L", "wafer_id": "W", "timestamp": "2024-01-01T00:00:00Z", "map_path": "/x", "colour": 1}),
            vec!["colour"],
        ),
        (
            json!({"equipment_id": "E", "lot_id": "L", "wafer_id": "W", "timestamp": "2024-01-01T00:00:00Z", "map_path": "/x", "report_id": "../etc"}),
            vec!["report_id"],
        ),
        (
            json!({"equipment_id": "E", "lot_id": "L", "wafer_id": "W", "timestamp": "2024-01-01T00:00:00Z", "map_png_base64": "@@@"}),
            vec!["map_png_base64"],
        ),
    ];
    let s = server();
    for (body, fields) in cases {
        let (status, resp) = post(&s.url, &body);
        assert_eq!(status, 400, "{body}");
        let got: Vec<String> = resp["errors"]
            .as_array()
            .unwrap()
            .iter()
            .map(|e| e["field"].as_str().unwrap().to_string())
            .collect();
        for f in fields {
            assert!(got.iter().any(|g| g.contains(f)), "{f} not in {got:?}");
        }
    }
    let mut resp = agent()
        .post(&format!("{}/inspections", s.url))
        .send("{not json")
        .unwrap();
    assert_eq!(resp.status().as_u16(), 400);
    let _: Value = resp.body_mut().read_json().unwrap();
}

#[test]
fn parse_request_reports_unknown_field_and_missing_lot() {
    let errs =
        parse_request(br#"{"equipment_id": "E", "wafer_id": "W", "timestamp": "2024-01-01T00:00:00Z"}"#).unwrap_err();
    assert_eq!(errs[0].field, "lot_id");
}

#[test]
fn missing_map_file_is_404() {
    let s = server();
    let (status, resp) = post(&s.url, &request(&s.dir.path().join("absent.png")));
    assert_eq!(status, 404);
    assert!(resp["error"].as_str().unwrap().contains("absent.png"));
}

#[test]
fn unreadable_map_gives_partial_report() {
    let s = server();
    let p = s.dir.path().join("corrupt.png");
    std::fs::write(&p, b"not a png").unwrap();
    let (status, body) = post(&s.url, &request(&p));
    assert_eq!(status, 200);
    let report = &body["report"];
    assert!(report["classification"].is_null());
    let errors = report["errors"].as_array().unwrap();
    assert!(errors.iter().any(|e| e["node"] == "DefectDescriber"));
    let schema: Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    assert!(validate(&schema, report).is_empty());
}

#[test]
fn inline_map_and_ablation_flags() {
    let s = server();
    let png = render(DefectClass::Scratch, &GeneratorParams::default(), 11).to_png();
    let mut body = request(std::path::Path::new("unused"));
    let obj = body.as_object_mut().unwrap();
    obj.remove("map_path");
    obj.insert(
        "map_png_base64".into(),
        json!(base64::engine::general_purpose::STANDARD.encode(png)),
    );
    obj.insert("disable_telemetry".into(), json!(true));
    obj.insert("disable_retrieval".into(), json!(true));
    obj.insert("report_id".into(), json!("baseline-1"));
    let (status, resp) = post(&s.url, &body);
    assert_eq!(status, 200, "{resp}");
    assert_eq!(resp["report_id"], "baseline-1");
    for h in resp["report"]["hypotheses"].as_array().unwrap() {
        for e in h["evidence"].as_array().unwrap() {
            assert_eq!(e["kind"], "ClassPrior");
        }
    }
}

#[test]
fn unknown_report_is_404() {
    let s = server();
    assert_eq!(get(&format!("{}/reports/nope", s.url)).0, 404);
    assert_eq!(get(&format!("{}/reports/..%2Fetc/markdown", s.url)).0, 404);
}

#[test]
fn metrics_after_one_run() {
    let s = server();
    let (status, text) = get(&format!("{}/metrics", s.url));
    assert_eq!(status, 200);
    assert!(parse(&text).is_ok());
    post(&s.url, &request(&scratch_png(s.dir.path())));
    let mut resp = agent().get(&format!("{}/metrics", s.url)).call().unwrap();
    assert_eq!(resp.headers()["content-type"], METRICS_CONTENT_TYPE);
    let text = resp.body_mut().read_to_string().unwrap();
    let fams = parse(&text).unwrap();
    let nodes = histogram_series(&fams["fa_node_duration_seconds"]);
    assert_eq!(nodes.len(), NODES.len());
    for node in NODES {
        let key = [("node".to_string(), node.to_string())].into_iter().collect();
        assert_eq!(nodes[&key].2, 1.0, "{node}");
    }
    let total = histogram_series(&fams["fa_pipeline_duration_seconds"]);
    assert_eq!(total.values().next().unwrap().2, 1.0);
    assert_eq!(s.state.metrics.runs(), 1);
    let requests = &fams["fa_http_requests_total"].samples;
    assert!(requests
        .iter()
        .any(|r| r.labels["route"] == "/inspections" && r.labels["status"] == "200"));
}

#[test]
fn health_reports_resources() {
    let s = server();
    let (status, text) = get(&format!("{}/health", s.url));
    assert_eq!(status, 200);
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["status"], "ok");
    assert_eq!(v["classifier"], true);
    assert_eq!(v["index_cases"], 54);
}

#[test]
fn concurrent_requests_produce_independent_reports() {
    let s = server();
    let png = scratch_png(s.dir.path());
    let results: Vec<(u16, Value)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..8)
            .map(|i| {
                let mut body = request(&png);
                body["wafer_id"] = json!(format!("W{i:02}"));
                let url = s.url.clone();
                scope.spawn(move || post(&url, &body))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut ids: Vec<&str> = results.iter().map(|(_, b)| b["report_id"].as_str().unwrap()).collect();
    assert!(results
        .iter()
        .all(|(s, b)| *s == 200 && b["report"]["errors"] == json!([])));
    let first = &results[0].1["report"]["hypotheses"][0]["mechanism"];
    assert!(results
        .iter()
        .all(|(_, b)| &b["report"]["hypotheses"][0]["mechanism"] == first));
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 8);
    assert_eq!(s.state.metrics.runs(), 8);
}
