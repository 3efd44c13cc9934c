//! Service configuration: one TOML file plus `FA_*` environment overrides.

use std::path::{Path, PathBuf};
use std::time::Duration;

use fa_core::pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{var}={value:?}: {message}")]
    Env {
        var: String,
        value: String,
        message: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    /// Telemetry log directory; no telemetry when unset.
    pub telemetry_dir: Option<PathBuf>,
    /// Case index file; an in-memory index seeded with synthetic history when unset.
    pub index_path: Option<PathBuf>,
    /// Past cases per class seeded into an empty index.
    pub seed_history_per_class: usize,
    /// Classifier weights; trained on the synthetic preset at startup when unset.
    pub model_path: Option<PathBuf>,
    /// Base URL of the inference sidecar. Template backends when unset.
    pub sidecar_url: Option<String>,
    pub sidecar_timeout_ms: u64,
    pub pipeline: PipelineConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            host: "127.0.0.1".into(),
            port: 8080,
            telemetry_dir: None,
            index_path: None,
            seed_history_per_class: 12,
            model_path: None,
            sidecar_url: None,
            sidecar_timeout_ms: 5000,
            pipeline: PipelineConfig::default(),
        }
    }
}

fn parse_env<T: std::str::FromStr>(var: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Env {
        var: var.into(),
        value: value.into(),
        message: e.to_string(),
    })
}

fn optional(value: &str) -> Option<String> {
    (!value.is_empty()).then(|| value.to_string())
}

impl ServiceConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: origin.into(),
            message: format!("{}: {}", e.path(), e.inner().message()),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// File (if any), then overrides from the process environment.
    pub fn resolve(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply_env(std::env::vars())?;
        Ok(cfg)
    }

    /// Apply `FA_*` overrides. Unknown `FA_` variables are ignored.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
        for (var, value) in vars {
            let v = value.as_str();
            match var.as_str() {
                "FA_HOST" => self.host = value.clone(),
                "FA_PORT" => self.port = parse_env(&var, v)?,
                "FA_TELEMETRY_DIR" => self.telemetry_dir = optional(v).map(PathBuf::from),
                "FA_INDEX_PATH" => self.index_path = optional(v).map(PathBuf::from),
                "FA_MODEL_PATH" => self.model_path = optional(v).map(PathBuf::from),
                "FA_REPORT_DIR" => self.pipeline.report_dir = optional(v).map(PathBuf::from),
                "FA_SIDECAR_URL" => self.sidecar_url = optional(v),
                "FA_SIDECAR_TIMEOUT_MS" => self.sidecar_timeout_ms = parse_env(&var, v)?,
                "FA_WINDOW_MS" => self.pipeline.window_ms = parse_env(&var, v)?,
                "FA_TOP_K" => self.pipeline.top_k = parse_env(&var, v)?,
                "FA_WEIGHT_TELEMETRY" => self.pipeline.weights.telemetry = parse_env(&var, v)?,
                "FA_WEIGHT_RETRIEVAL" => self.pipeline.weights.retrieval = parse_env(&var, v)?,
                "FA_WEIGHT_PRIOR" => self.pipeline.weights.prior = parse_env(&var, v)?,
                "FA_UPSERT" => self.pipeline.upsert = parse_env(&var, v)?,
                _ => {}
            }
        }
        Ok(())
    }

    pub fn sidecar_timeout(&self) -> Duration {
        Duration::from_millis(self.sidecar_timeout_ms)
    }
}
