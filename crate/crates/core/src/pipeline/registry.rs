use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::tables::{CorrelationTable, RecipeTable};
use crate::analytics::MlpModel;
use crate::index::{VectorIndex, DEFAULT_TOP_K};
use crate::narrative::{Narrator, TemplateNarrator};
use crate::telemetry::{anomaly::DEFAULT_THRESHOLD, TelemetryEvent, TelemetryLog};
use crate::wafer::WaferMap;

/// Read access to equipment telemetry.
pub trait TelemetrySource: Send + Sync {
    fn window(&self, equipment_id: &str, start_ms: i64, end_ms: i64) -> Result<Vec<TelemetryEvent>, String>;
}

impl TelemetrySource for TelemetryLog {
    fn window(&self, equipment_id: &str, start_ms: i64, end_ms: i64) -> Result<Vec<TelemetryEvent>, String> {
        Ok(self.query_window(equipment_id, start_ms, end_ms))
    }
}

/// Image embedding backend.
pub trait Embedder: Send + Sync {
    fn name(&self) -> &str;
    fn embed(&self, map: &WaferMap) -> Result<Vec<f64>, String>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    pub telemetry: f64,
    pub retrieval: f64,
    pub prior: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            telemetry: 0.5,
            retrieval: 0.3,
            prior: 0.2,
        }
    }
}

impl Weights {
    pub fn scaled(self, c: f64) -> Self {
        Weights {
            telemetry: self.telemetry * c,
            retrieval: self.retrieval * c,
            prior: self.prior * c,
        }
    }

    pub fn total(&self) -> f64 {
        self.telemetry + self.retrieval + self.prior
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub weights: Weights,
    /// Telemetry lookback before the inspection time.
    pub window_ms: i64,
    pub top_k: usize,
    pub max_hypotheses: usize,
    pub anomaly_threshold: f64,
    /// Where JSON and Markdown reports go; `None` keeps them in memory.
    pub report_dir: Option<PathBuf>,
    /// Add each finished case to the vector index.
    pub upsert: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            weights: Weights::default(),
            window_ms: 2 * 60 * 60 * 1000,
            top_k: DEFAULT_TOP_K,
            max_hypotheses: 3,
            anomaly_threshold: DEFAULT_THRESHOLD,
            report_dir: None,
            upsert: true,
        }
    }
}

/// Shared handles for pipeline runs. Built once, then only read.
#[derive(Clone)]
pub struct ResourceRegistry {
    pub classifier: Option<Arc<MlpModel>>,
    pub index: Option<Arc<VectorIndex>>,
    pub telemetry: Option<Arc<dyn TelemetrySource>>,
    pub narrator: Arc<dyn Narrator>,
    pub embedder: Option<Arc<dyn Embedder>>,
    pub correlation: Arc<CorrelationTable>,
    pub recipes: Arc<RecipeTable>,
    pub config: PipelineConfig,
}

impl Default for ResourceRegistry {
    fn default() -> Self {
        ResourceRegistry {
            classifier: None,
            index: None,
            telemetry: None,
            narrator: Arc::new(TemplateNarrator),
            embedder: None,
            correlation: Arc::new(CorrelationTable::builtin()),
            recipes: Arc::new(RecipeTable::builtin()),
            config: PipelineConfig::default(),
        }
    }
}

impl ResourceRegistry {
    pub fn with_classifier(mut self, model: MlpModel) -> Self {
        self.classifier = Some(Arc::new(model));
        self
    }

    pub fn with_index(mut self, index: Arc<VectorIndex>) -> Self {
        self.index = Some(index);
        self
    }

    pub fn with_telemetry(mut self, source: Arc<dyn TelemetrySource>) -> Self {
        self.telemetry = Some(source);
        self
    }

    pub fn with_narrator(mut self, narrator: Arc<dyn Narrator>) -> Self {
        self.narrator = narrator;
        self
    }

    pub fn with_embedder(mut self, embedder: Arc<dyn Embedder>) -> Self {
        self.embedder = Some(embedder);
        self
    }

    pub fn with_config(mut self, config: PipelineConfig) -> Self {
        self.config = config;
        self
    }
}
