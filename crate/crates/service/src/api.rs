//! HTTP API: inspections, reports, metrics and health.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use chrono::DateTime;
use fa_core::pipeline::{run_pipeline, FAState, Inputs, MapInput, ResourceRegistry, RunOptions};
use fa_core::WaferMap;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::metrics::Metrics;

pub const METRICS_CONTENT_TYPE: &str = "text/plain; version=0.0.4; charset=utf-8";

pub struct AppState {
    pub registry: ResourceRegistry,
    pub metrics: Metrics,
    reports: RwLock<HashMap<String, Value>>,
}

impl AppState {
    pub fn new(registry: ResourceRegistry) -> Arc<Self> {
        Arc::new(AppState {
            registry,
            metrics: Metrics::default(),
            reports: RwLock::new(HashMap::new()),
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InspectionRequest {
    /// Wafer map PNG on the server's filesystem.
    #[serde(default)]
    pub map_path: Option<PathBuf>,
    /// Wafer map PNG, base64.
    #[serde(default)]
    pub map_png_base64: Option<String>,
    pub equipment_id: String,
    pub lot_id: String,
    pub wafer_id: String,
    /// Inspection time, RFC 3339.
    pub timestamp: String,
    #[serde(default)]
    pub report_id: Option<String>,
    #[serde(default)]
    pub disable_telemetry: bool,
    #[serde(default)]
    pub disable_retrieval: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    fn new(field: &str, message: impl Into<String>) -> Self {
        FieldError {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Failure outcomes for an inspection request.
#[derive(Debug, PartialEq)]
pub enum Rejection {
    Invalid(Vec<FieldError>),
    MapNotFound(PathBuf),
}

fn missing_field(message: &str) -> Option<&str> {
    let rest = message.strip_prefix("missing field `")?;
    rest.split('`').next()
}

/// Parse a request body, reporting problems by field path.
pub fn parse_request(body: &[u8]) -> Result<InspectionRequest, Vec<FieldError>> {
    let mut de = serde_json::Deserializer::from_slice(body);
    let req: InspectionRequest = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let message = e.inner().to_string();
        let path = e.path().to_string();
        let field = match (path.as_str(), missing_field(&message)) {
            (".", Some(name)) => name.to_string(),
            (_, Some(name)) => format!("{path}.{name}"),
            _ => path,
        };
        vec![FieldError { field, message }]
    })?;
    let mut errors = Vec::new();
    for (name, value) in [
        ("equipment_id", &req.equipment_id),
        ("lot_id", &req.lot_id),
        ("wafer_id", &req.wafer_id),
    ] {
        if value.trim().is_empty() {
            errors.push(FieldError::new(name, "must not be empty"));
        }
    }
    if let Err(e) = DateTime::parse_from_rfc3339(&req.timestamp) {
        errors.push(FieldError::new("timestamp", format!("not an RFC 3339 time: {e}")));
    }
    match (&req.map_path, &req.map_png_base64) {
        (None, None) => errors.push(FieldError::new(
            "map_path",
            "one of map_path or map_png_base64 is required",
        )),
        (Some(_), Some(_)) => errors.push(FieldError::new(
            "map_png_base64",
            "give either map_path or map_png_base64",
        )),
        _ => {}
    }
    if let Some(id) = &req.report_id {
        if !valid_id(id) {
            errors.push(FieldError::new("report_id", "use letters, digits, '-' and '_' only"));
        }
    }
    if errors.is_empty() {
        Ok(req)
    } else {
        Err(errors)
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Pipeline inputs for a validated request.
pub fn to_inputs(req: &InspectionRequest) -> Result<(Inputs, RunOptions), Rejection> {
    let map = match (&req.map_path, &req.map_png_base64) {
        (Some(p), _) => {
            if !p.exists() {
                return Err(Rejection::MapNotFound(p.clone()));
            }
            MapInput::Path(p.clone())
        }
        (None, Some(b64)) => {
            let bytes = base64::engine::general_purpose::STANDARD
                .decode(b64.trim())
                .map_err(|e| {
                    Rejection::Invalid(vec![FieldError::new("map_png_base64", format!("invalid base64: {e}"))])
                })?;
            let map = WaferMap::from_png(&bytes)
                .map_err(|e| Rejection::Invalid(vec![FieldError::new("map_png_base64", e.to_string())]))?;
            MapInput::Inline(map)
        }
        (None, None) => unreachable!("validated"),
    };
    let time_ms = DateTime::parse_from_rfc3339(&req.timestamp)
        .expect("validated")
        .timestamp_millis();
    let mut inputs = Inputs::new(map, &req.equipment_id, &req.lot_id, &req.wafer_id, time_ms);
    inputs.report_id = req.report_id.clone();
    let options = RunOptions {
        disable_telemetry: req.disable_telemetry,
        disable_retrieval: req.disable_retrieval,
    };
    Ok((inputs, options))
}

fn respond(state: &AppState, route: &str, status: StatusCode, body: impl IntoResponse) -> Response {
    state.metrics.record_request(route, status.as_u16());
    (status, body).into_response()
}

async fn post_inspection(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    const ROUTE: &str = "/inspections";
    let req = match parse_request(&body) {
        Ok(r) => r,
        Err(errors) => {
            return respond(
                &state,
                ROUTE,
                StatusCode::BAD_REQUEST,
                Json(json!({ "errors": errors })),
            )
        }
    };
    let (inputs, options) = match to_inputs(&req) {
        Ok(x) => x,
        Err(Rejection::Invalid(errors)) => {
            return respond(
                &state,
                ROUTE,
                StatusCode::BAD_REQUEST,
                Json(json!({ "errors": errors })),
            )
        }
        Err(Rejection::MapNotFound(p)) => {
            let msg = format!("map file not found: {}", p.display());
            return respond(&state, ROUTE, StatusCode::NOT_FOUND, Json(json!({ "error": msg })));
        }
    };
    let worker = state.clone();
    let run = tokio::task::spawn_blocking(move || run_pipeline(FAState::new(inputs), &worker.registry, options)).await;
    let final_state = match run {
        Ok(s) => s,
        Err(e) => {
            let msg = format!("pipeline task failed: {e}");
            return respond(
                &state,
                ROUTE,
                StatusCode::INTERNAL_SERVER_ERROR,
                Json(json!({ "error": msg })),
            );
        }
    };
    state.metrics.record_run(&final_state);
    let report = final_state
        .report
        .as_ref()
        .expect("report generator always runs")
        .to_value();
    let id = report["report_id"].as_str().unwrap_or_default().to_string();
    state
        .reports
        .write()
        .expect("reports lock")
        .insert(id.clone(), report.clone());
    respond(
        &state,
        ROUTE,
        StatusCode::OK,
        Json(json!({ "report_id": id, "report": report })),
    )
}

fn find_report(state: &AppState, id: &str) -> Option<Value> {
    if let Some(v) = state.reports.read().expect("reports lock").get(id) {
        return Some(v.clone());
    }
    let dir = state.registry.config.report_dir.as_ref()?;
    let text = std::fs::read_to_string(dir.join(format!("{id}.json"))).ok()?;
    serde_json::from_str(&text).ok()
}

async fn get_report(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    const ROUTE: &str = "/reports/{id}";
    match valid_id(&id).then(|| find_report(&state, &id)).flatten() {
        Some(v) => respond(&state, ROUTE, StatusCode::OK, Json(v)),
        None => respond(
            &state,
            ROUTE,
            StatusCode::NOT_FOUND,
            Json(json!({ "error": format!("no report {id}") })),
        ),
    }
}

async fn get_report_markdown(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    const ROUTE: &str = "/reports/{id}/markdown";
    match valid_id(&id).then(|| find_report(&state, &id)).flatten() {
        Some(v) => respond(
            &state,
            ROUTE,
            StatusCode::OK,
            (
                [(header::CONTENT_TYPE, "text/markdown; charset=utf-8")],
                fa_core::pipeline::report::render_markdown(&v),
            ),
        ),
        None => respond(&state, ROUTE, StatusCode::NOT_FOUND, format!("no report {id}\n")),
    }
}

async fn get_metrics(State(state): State<Arc<AppState>>) -> Response {
    state.metrics.record_request("/metrics", 200);
    ([(header::CONTENT_TYPE, METRICS_CONTENT_TYPE)], state.metrics.render()).into_response()
}

async fn get_health(State(state): State<Arc<AppState>>) -> Response {
    let reg = &state.registry;
    let body = json!({
        "status": "ok",
        "classifier": reg.classifier.is_some(),
        "telemetry": reg.telemetry.is_some(),
        "index_cases": reg.index.as_ref().map(|i| i.len()).unwrap_or(0),
        "narrator": reg.narrator.name(),
        "runs": state.metrics.runs(),
    });
    respond(&state, "/health", StatusCode::OK, Json(body))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/inspections", post(post_inspection))
        .route("/reports/{id}", get(get_report))
        .route("/reports/{id}/markdown", get(get_report_markdown))
        .route("/metrics", get(get_metrics))
        .route("/health", get(get_health))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
