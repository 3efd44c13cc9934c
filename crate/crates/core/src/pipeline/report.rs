//! Report assembly and rendering.

use std::io;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::state::*;
use crate::classes::{DefectClass, Modality, Severity};
use crate::telemetry::{AnomalyKind, EventKind};

pub const SCHEMA_VERSION: &str = "1.0";
pub const REPORT_SCHEMA: &str = include_str!("../../data/report.schema.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub equipment_id: String,
    pub lot_id: String,
    pub wafer_id: String,
    pub timestamp: String,
    pub inspection_time: String,
    pub modality: Modality,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub defect_class: DefectClass,
    pub confidence: f64,
    pub distribution: IndexMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialSummary {
    pub defect_density: f64,
    pub largest_component_fraction: f64,
    pub linearity: f64,
    pub edge_band_density: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeveritySection {
    pub level: Severity,
    pub yield_impact_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievedCase {
    pub case_id: String,
    pub similarity: f64,
    pub defect_class: DefectClass,
    pub mechanism: Option<String>,
    pub equipment_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySection {
    pub window_start: String,
    pub window_end: String,
    pub report_count: usize,
    pub alarms: Vec<String>,
    pub transitions: Vec<String>,
    pub anomalies: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FAReport {
    pub schema_version: String,
    pub report_id: String,
    pub header: Header,
    pub classification: Option<Classification>,
    pub description: Option<String>,
    pub spatial: Option<SpatialSummary>,
    pub hypotheses: Option<Vec<RootCauseHypothesis>>,
    pub severity: Option<SeveritySection>,
    pub recommendations: Option<IndexMap<String, String>>,
    pub retrieved_cases: Option<Vec<RetrievedCase>>,
    pub telemetry: Option<TelemetrySection>,
    pub errors: Vec<ErrorEntry>,
    pub node_latencies: IndexMap<String, f64>,
}

fn telemetry_section(t: &TelemetrySummary) -> TelemetrySection {
    let alarms = t
        .alarms
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::Alarm { alarm_id, set, text } => Some(format!(
                "{} alarm {alarm_id} {} ({text})",
                rfc3339(e.timestamp_ms),
                if *set { "set" } else { "cleared" }
            )),
            _ => None,
        })
        .collect();
    let transitions = t
        .transitions
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::StateTransition { from, to } => Some(format!("{} {from} -> {to}", rfc3339(e.timestamp_ms))),
            _ => None,
        })
        .collect();
    let anomalies = t
        .anomalies
        .iter()
        .map(|a| {
            let kind = match a.kind {
                AnomalyKind::Step => "step",
                AnomalyKind::Drift => "drift",
                AnomalyKind::OutOfBand => "out-of-band",
            };
            format!(
                "{} {kind} on {} magnitude {:+.3} z {:.1}",
                rfc3339(a.window_start_ms),
                a.channel,
                a.magnitude,
                a.z_score
            )
        })
        .collect();
    TelemetrySection {
        window_start: rfc3339(t.window_start_ms),
        window_end: rfc3339(t.window_end_ms),
        report_count: t.report_count,
        alarms,
        transitions,
        anomalies,
    }
}

impl FAReport {
    pub fn from_state(s: &FAState) -> Self {
        let i = &s.inputs;
        FAReport {
            schema_version: SCHEMA_VERSION.to_string(),
            report_id: i.report_id(),
            header: Header {
                equipment_id: i.equipment_id.clone(),
                lot_id: i.lot_id.clone(),
                wafer_id: i.wafer_id.clone(),
                timestamp: rfc3339(i.timestamp_ms),
                inspection_time: rfc3339(i.inspection_time_ms),
                modality: i.modality,
            },
            classification: match (s.defect_class, s.confidence) {
                (Some(defect_class), Some(confidence)) => Some(Classification {
                    defect_class,
                    confidence,
                    distribution: s.class_distribution.clone().unwrap_or_default(),
                }),
                _ => None,
            },
            description: s.defect_description.clone(),
            spatial: s.spatial_stats.as_ref().map(|st| SpatialSummary {
                defect_density: st.defect_density,
                largest_component_fraction: st.largest_component_fraction,
                linearity: st.linearity,
                edge_band_density: st.edge_band_density,
            }),
            hypotheses: s.hypotheses.clone(),
            severity: match (s.severity, s.yield_impact_pct) {
                (Some(level), Some(yield_impact_pct)) => Some(SeveritySection {
                    level,
                    yield_impact_pct,
                }),
                _ => None,
            },
            recommendations: s.recommendations.clone(),
            retrieved_cases: s.retrieved_cases.as_ref().map(|hits| {
                hits.iter()
                    .map(|h| RetrievedCase {
                        case_id: h.case.case_id.clone(),
                        similarity: h.similarity,
                        defect_class: h.case.defect_class,
                        mechanism: h.case.mechanism.clone(),
                        equipment_id: h.case.equipment_id.clone(),
                    })
                    .collect()
            }),
            telemetry: s.telemetry_summary.as_ref().map(telemetry_section),
            errors: s.errors.clone(),
            node_latencies: s.node_latencies.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("report serializes")
    }

    pub fn to_markdown(&self) -> String {
        render_markdown(&self.to_value())
    }
}

/// Node responsible for each top-level section.
fn owner(section: &str) -> Option<&'static str> {
    Some(match section {
        "classification" | "description" | "spatial" => NODE_DESCRIBE,
        "hypotheses" | "retrieved_cases" | "telemetry" => NODE_ROOT_CAUSE,
        "severity" => NODE_SEVERITY,
        "recommendations" => NODE_RECIPE,
        _ => return None,
    })
}

fn title(key: &str) -> String {
    let mut t = key.replace('_', " ");
    if let Some(c) = t.get_mut(0..1) {
        c.make_ascii_uppercase();
    }
    t
}

/// Scalar as it appears in Markdown. Numbers keep their JSON spelling.
pub fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "null".into(),
        other => other.to_string(),
    }
}

fn bullets(out: &mut String, v: &Value, depth: usize) {
    let pad = "  ".repeat(depth);
    match v {
        Value::Object(map) => {
            for (k, val) in map {
                match val {
                    Value::Object(_) | Value::Array(_) => {
                        out.push_str(&format!("{pad}- {k}:\n"));
                        bullets(out, val, depth + 1);
                    }
                    _ => out.push_str(&format!("{pad}- {k}: {}\n", scalar(val))),
                }
            }
        }
        Value::Array(items) if items.is_empty() => out.push_str(&format!("{pad}- none\n")),
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                match item {
                    Value::Object(_) | Value::Array(_) => {
                        out.push_str(&format!("{pad}- [{}]\n", i + 1));
                        bullets(out, item, depth + 1);
                    }
                    _ => out.push_str(&format!("{pad}- {}\n", scalar(item))),
                }
            }
        }
        other => out.push_str(&format!("{pad}- {}\n", scalar(other))),
    }
}

/// Markdown view of a report value. Every JSON leaf appears verbatim;
/// missing sections read `UNAVAILABLE` with a pointer to the failing node.
pub fn render_markdown(report: &Value) -> String {
    let id = report.get("report_id").map(scalar).unwrap_or_default();
    let errors: Vec<&str> = report
        .get("errors")
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(|e| e.get("node").and_then(Value::as_str)).collect())
        .unwrap_or_default();
    let no_action = report.pointer("/severity/level").and_then(Value::as_str) == Some(Severity::None.name());
    let mut out = format!("# Failure analysis report {id}\n");
    let Some(map) = report.as_object() else {
        return out;
    };
    for (key, val) in map {
        if key == "report_id" {
            continue;
        }
        if key == "schema_version" {
            out.push_str(&format!("\nschema_version: {}\n", scalar(val)));
            continue;
        }
        out.push_str(&format!("\n## {} ({key})\n\n", title(key)));
        if key == "recommendations" && no_action {
            out.push_str("No corrective action required.\n\n");
        }
        match val {
            Value::Null => {
                let node = owner(key).filter(|n| errors.contains(n));
                match node {
                    Some(n) => out.push_str(&format!("UNAVAILABLE (see errors: {n})\n")),
                    None => out.push_str("UNAVAILABLE\n"),
                }
            }
            Value::String(s) => out.push_str(&format!("{s}\n")),
            other => bullets(&mut out, other, 0),
        }
    }
    out
}

fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)
}

/// Write `<id>.json` and `<id>.md` into `dir`.
pub fn write(report: &FAReport, dir: &Path) -> io::Result<ReportPaths> {
    std::fs::create_dir_all(dir)?;
    let json = dir.join(format!("{}.json", report.report_id));
    let markdown = dir.join(format!("{}.md", report.report_id));
    write_atomic(&json, &report.to_json())?;
    write_atomic(&markdown, &report.to_markdown())?;
    Ok(ReportPaths { json, markdown })
}
