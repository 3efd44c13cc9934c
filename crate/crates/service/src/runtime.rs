//! Assembling the shared pipeline resources from configuration.

use std::sync::Arc;

use anyhow::Context;
use fa_core::analytics::training::train_default;
use fa_core::analytics::MlpModel;
use fa_core::equipment::simulate_into;
use fa_core::index::VectorIndex;
use fa_core::pipeline::cases::{builtin_scenario, seed_history, BUILTIN_SCENARIOS};
use fa_core::pipeline::sidecar::{HttpEmbedder, HttpNarrator};
use fa_core::pipeline::{CorrelationTable, ResourceRegistry};
use fa_core::telemetry::TelemetryLog;
use tracing::info;

use crate::config::ServiceConfig;

/// Seed for the classifier trained when no model file is configured.
pub const DEFAULT_TRAIN_SEED: u64 = 42;
/// Seed for synthetic case history.
pub const HISTORY_SEED: u64 = 9;

pub fn load_or_train(model_path: Option<&std::path::Path>) -> anyhow::Result<MlpModel> {
    match model_path {
        Some(p) => MlpModel::load(p).with_context(|| format!("loading model {}", p.display())),
        None => {
            info!("no model configured; training on the synthetic preset");
            Ok(train_default(DEFAULT_TRAIN_SEED)?.model)
        }
    }
}

pub fn open_index(cfg: &ServiceConfig) -> anyhow::Result<Arc<VectorIndex>> {
    let index = match &cfg.index_path {
        Some(p) => VectorIndex::open(p).with_context(|| format!("opening index {}", p.display()))?,
        None => VectorIndex::in_memory(),
    };
    // Sidecar embeddings have their own dimension; synthetic history would not match.
    if index.is_empty() && cfg.seed_history_per_class > 0 && cfg.sidecar_url.is_none() {
        let n = seed_history(
            &index,
            &CorrelationTable::builtin(),
            cfg.seed_history_per_class,
            HISTORY_SEED,
        )?;
        info!(cases = n, "seeded case history");
    }
    Ok(Arc::new(index))
}

/// Registry for `cfg`. `model` skips loading or training when supplied.
pub fn build_registry(cfg: &ServiceConfig, model: Option<MlpModel>) -> anyhow::Result<ResourceRegistry> {
    let model = match model {
        Some(m) => m,
        None => load_or_train(cfg.model_path.as_deref())?,
    };
    let mut reg = ResourceRegistry::default()
        .with_classifier(model)
        .with_index(open_index(cfg)?)
        .with_config(cfg.pipeline.clone());
    if let Some(dir) = &cfg.telemetry_dir {
        let log = TelemetryLog::open(dir).with_context(|| format!("opening telemetry log {}", dir.display()))?;
        reg = reg.with_telemetry(Arc::new(log));
    }
    if let Some(url) = &cfg.sidecar_url {
        reg = reg
            .with_narrator(Arc::new(HttpNarrator::new(url, cfg.sidecar_timeout())))
            .with_embedder(Arc::new(HttpEmbedder::new(url, cfg.sidecar_timeout())));
    }
    Ok(reg)
}

/// Telemetry for the shipped case scenarios, written into `dir`.
pub fn simulate_builtin_cases(dir: &std::path::Path) -> anyhow::Result<Arc<TelemetryLog>> {
    let log = TelemetryLog::open(dir)?;
    for (name, _) in BUILTIN_SCENARIOS {
        let sc = builtin_scenario(name).expect("shipped scenario");
        simulate_into(&sc, &log)?;
    }
    Ok(Arc::new(log))
}
