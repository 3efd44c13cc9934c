#![allow(dead_code)]

use std::sync::OnceLock;

use fa_core::analytics::training::{train_default, TrainedClassifier};
use fa_core::wafer::{Cell, WaferMap, GRID};

/// Nine-class classifier trained once per test binary.
pub fn classifier() -> &'static TrainedClassifier {
    static MODEL: OnceLock<TrainedClassifier> = OnceLock::new();
    MODEL.get_or_init(|| train_default(42).expect("training succeeds"))
}

/// Cell-centre coordinates relative to the wafer centre, y down.
pub fn centre(r: usize, c: usize) -> (f64, f64) {
    let half = GRID as f64 / 2.0;
    (c as f64 + 0.5 - half, r as f64 + 0.5 - half)
}

pub fn radius(r: usize, c: usize) -> f64 {
    let (x, y) = centre(r, c);
    (x * x + y * y).sqrt() / (GRID as f64 / 2.0)
}

pub fn fails(map: &WaferMap) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for r in 0..GRID {
        for c in 0..GRID {
            if map.get(r, c) == Cell::Fail {
                v.push((r, c));
            }
        }
    }
    v
}

pub fn on_wafer(map: &WaferMap) -> usize {
    let mut n = 0;
    for r in 0..GRID {
        for c in 0..GRID {
            if map.get(r, c) != Cell::OffWafer {
                n += 1;
            }
        }
    }
    n
}

pub mod schema;

use std::path::PathBuf;
use std::sync::Arc;

use fa_core::equipment::{simulate_into, EquipmentScenario};
use fa_core::index::VectorIndex;
use fa_core::pipeline::cases::{scenario_inputs, seed_history};
use fa_core::pipeline::{CorrelationTable, Inputs, ResourceRegistry};
use fa_core::telemetry::TelemetryLog;

pub const SCENARIOS: [&str; 5] = [
    "case1_scratch_chuck",
    "case2_center_cvd",
    "case3_ring_etch",
    "case4_edge_dicing",
    "case5_clean_litho",
];

pub fn scenario(name: &str) -> EquipmentScenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("data/scenarios/{name}.toml"));
    EquipmentScenario::load(&path).expect("shipped scenario loads")
}

pub fn case_inputs() -> Vec<(String, Inputs)> {
    SCENARIOS
        .iter()
        .map(|n| {
            (
                n.to_string(),
                scenario_inputs(&scenario(n)).expect("scenario has an inspection"),
            )
        })
        .collect()
}

/// Telemetry for all five scenarios, a seeded case history and the shared
/// classifier. Reports stay in memory and are not added to the index.
pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub log: Arc<TelemetryLog>,
    pub index: Arc<VectorIndex>,
    pub registry: ResourceRegistry,
}

pub fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let log = Arc::new(TelemetryLog::open(&dir.path().join("telemetry")).unwrap());
    for name in SCENARIOS {
        simulate_into(&scenario(name), &log).unwrap();
    }
    let index = Arc::new(VectorIndex::in_memory());
    seed_history(&index, &CorrelationTable::builtin(), 12, 9).unwrap();
    let mut registry = ResourceRegistry::default()
        .with_classifier(classifier().model.clone())
        .with_index(index.clone())
        .with_telemetry(log.clone());
    registry.config.upsert = false;
    Fixture {
        dir,
        log,
        index,
        registry,
    }
}
