use std::collections::BTreeSet;
use std::path::PathBuf;

use chrono::{DateTime, SecondsFormat, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::report::FAReport;
use crate::analytics::SpatialStats;
use crate::classes::{DefectClass, Modality, Severity};
use crate::index::ScoredCase;
use crate::telemetry::{PvAnomaly, TelemetryEvent};
use crate::wafer::WaferMap;

pub const NODE_DESCRIBE: &str = "DefectDescriber";
pub const NODE_ROOT_CAUSE: &str = "RootCauseAnalyzer";
pub const NODE_SEVERITY: &str = "SeverityClassifier";
pub const NODE_RECIPE: &str = "RecipeAdvisor";
pub const NODE_REPORT: &str = "ReportGenerator";

/// Execution order.
pub const NODES: [&str; 5] = [NODE_DESCRIBE, NODE_ROOT_CAUSE, NODE_SEVERITY, NODE_RECIPE, NODE_REPORT];

#[derive(Clone, Debug, PartialEq)]
pub enum MapInput {
    Path(PathBuf),
    Inline(WaferMap),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Inputs {
    pub map: Option<MapInput>,
    pub modality: Modality,
    pub equipment_id: String,
    pub lot_id: String,
    pub wafer_id: String,
    /// Report time.
    pub timestamp_ms: i64,
    /// End of the telemetry lookback window.
    pub inspection_time_ms: i64,
    /// Overrides the derived report id.
    pub report_id: Option<String>,
}

impl Inputs {
    pub fn new(map: MapInput, equipment_id: &str, lot_id: &str, wafer_id: &str, inspection_time_ms: i64) -> Self {
        Inputs {
            map: Some(map),
            modality: Modality::WaferMap,
            equipment_id: equipment_id.to_string(),
            lot_id: lot_id.to_string(),
            wafer_id: wafer_id.to_string(),
            timestamp_ms: inspection_time_ms,
            inspection_time_ms,
            report_id: None,
        }
    }

    pub fn report_id(&self) -> String {
        if let Some(id) = &self.report_id {
            return id.clone();
        }
        let stamp = DateTime::<Utc>::from_timestamp_millis(self.timestamp_ms)
            .map(|t| t.format("%Y%m%dT%H%M%S").to_string())
            .unwrap_or_else(|| self.timestamp_ms.to_string());
        let raw = format!("FA-{}-{}-{}-{stamp}", self.equipment_id, self.lot_id, self.wafer_id);
        raw.chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                    c
                } else {
                    '_'
                }
            })
            .collect()
    }
}

pub fn rfc3339(ms: i64) -> String {
    DateTime::<Utc>::from_timestamp_millis(ms)
        .map(|t| t.to_rfc3339_opts(SecondsFormat::Millis, true))
        .unwrap_or_else(|| ms.to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorEntry {
    pub node: String,
    pub message: String,
    pub timestamp: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EvidenceKind {
    Telemetry,
    Retrieval,
    ClassPrior,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub kind: EvidenceKind,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootCauseHypothesis {
    pub mechanism: String,
    pub narrative: String,
    pub score: f64,
    pub evidence: Vec<Evidence>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TelemetrySummary {
    pub window_start_ms: i64,
    pub window_end_ms: i64,
    pub report_count: usize,
    pub alarms: Vec<TelemetryEvent>,
    pub transitions: Vec<TelemetryEvent>,
    pub anomalies: Vec<PvAnomaly>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportPaths {
    pub json: PathBuf,
    pub markdown: PathBuf,
}

/// Shared pipeline state. Nodes only add to it; `errors` only grows.
#[derive(Clone, Debug, PartialEq)]
pub struct FAState {
    pub inputs: Inputs,
    pub features: Option<Vec<f64>>,
    pub embedding: Option<Vec<f64>>,
    pub defect_class: Option<DefectClass>,
    pub confidence: Option<f64>,
    pub class_distribution: Option<IndexMap<String, f64>>,
    pub spatial_stats: Option<SpatialStats>,
    pub defect_description: Option<String>,
    pub telemetry_summary: Option<TelemetrySummary>,
    pub retrieved_cases: Option<Vec<ScoredCase>>,
    pub hypotheses: Option<Vec<RootCauseHypothesis>>,
    pub severity: Option<Severity>,
    pub yield_impact_pct: Option<f64>,
    pub recommendations: Option<IndexMap<String, String>>,
    pub report: Option<FAReport>,
    pub report_paths: Option<ReportPaths>,
    pub errors: Vec<ErrorEntry>,
    pub node_latencies: IndexMap<String, f64>,
}

impl FAState {
    pub fn new(inputs: Inputs) -> Self {
        FAState {
            inputs,
            features: None,
            embedding: None,
            defect_class: None,
            confidence: None,
            class_distribution: None,
            spatial_stats: None,
            defect_description: None,
            telemetry_summary: None,
            retrieved_cases: None,
            hypotheses: None,
            severity: None,
            yield_impact_pct: None,
            recommendations: None,
            report: None,
            report_paths: None,
            errors: Vec::new(),
            node_latencies: IndexMap::new(),
        }
    }

    /// Error entries are stamped with the run's report time so nodes stay
    /// deterministic.
    pub fn push_error(&mut self, node: &str, message: impl Into<String>) {
        self.errors.push(ErrorEntry {
            node: node.to_string(),
            message: message.into(),
            timestamp: rfc3339(self.inputs.timestamp_ms),
        });
    }

    pub fn errors_for(&self, node: &str) -> impl Iterator<Item = &ErrorEntry> {
        let node = node.to_string();
        self.errors.iter().filter(move |e| e.node == node)
    }

    /// Names of the computed fields that are populated.
    pub fn present_keys(&self) -> BTreeSet<&'static str> {
        let mut keys = BTreeSet::new();
        let mut add = |present: bool, k: &'static str| {
            if present {
                keys.insert(k);
            }
        };
        add(self.features.is_some(), "features");
        add(self.embedding.is_some(), "embedding");
        add(self.defect_class.is_some(), "defect_class");
        add(self.confidence.is_some(), "confidence");
        add(self.class_distribution.is_some(), "class_distribution");
        add(self.spatial_stats.is_some(), "spatial_stats");
        add(self.defect_description.is_some(), "defect_description");
        add(self.telemetry_summary.is_some(), "telemetry_summary");
        add(self.retrieved_cases.is_some(), "retrieved_cases");
        add(self.hypotheses.is_some(), "hypotheses");
        add(self.severity.is_some(), "severity");
        add(self.yield_impact_pct.is_some(), "yield_impact_pct");
        add(self.recommendations.is_some(), "recommendations");
        add(self.report.is_some(), "report");
        add(self.report_paths.is_some(), "report_paths");
        keys
    }
}
