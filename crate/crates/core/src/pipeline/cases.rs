//! Inspection inputs from equipment scenarios, and a seeded case history.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::nodes::severity_for;
use super::state::{Inputs, MapInput};
use super::tables::CorrelationTable;
use crate::analytics::{extract_features, spatial_stats};
use crate::classes::DefectClass;
use crate::equipment::EquipmentScenario;
use crate::index::{DefectCase, IndexError, VectorIndex};
use crate::synth::dataset::equipment_id;
use crate::synth::{render, GeneratorParams};

/// Shipped case scenarios as (name, TOML text).
pub const BUILTIN_SCENARIOS: [(&str, &str); 5] = [
    (
        "case1_scratch_chuck",
        include_str!("../../data/scenarios/case1_scratch_chuck.toml"),
    ),
    (
        "case2_center_cvd",
        include_str!("../../data/scenarios/case2_center_cvd.toml"),
    ),
    (
        "case3_ring_etch",
        include_str!("../../data/scenarios/case3_ring_etch.toml"),
    ),
    (
        "case4_edge_dicing",
        include_str!("../../data/scenarios/case4_edge_dicing.toml"),
    ),
    (
        "case5_clean_litho",
        include_str!("../../data/scenarios/case5_clean_litho.toml"),
    ),
];

pub fn builtin_scenario(name: &str) -> Option<EquipmentScenario> {
    BUILTIN_SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| EquipmentScenario::parse(text).expect("shipped scenario parses"))
}

/// Pipeline inputs for a scenario's `[inspection]` table, with the map
/// rendered in memory.
pub fn scenario_inputs(sc: &EquipmentScenario) -> Option<Inputs> {
    let insp = sc.inspection.as_ref()?;
    let map = render(insp.defect_class, &GeneratorParams::default(), insp.map_seed);
    Some(Inputs::new(
        MapInput::Inline(map),
        &sc.equipment_id,
        &insp.lot_id,
        &insp.wafer_id,
        insp.time.timestamp_millis(),
    ))
}

/// 2023-01-01T00:00:00Z; history cases are dated back from here.
const HISTORY_EPOCH_MS: i64 = 1_672_531_200_000;

/// Fill `index` with `per_class` past cases for each class. Each case's
/// mechanism is drawn from the class priors. Returns the number inserted.
pub fn seed_history(
    index: &VectorIndex,
    table: &CorrelationTable,
    per_class: usize,
    seed: u64,
) -> Result<usize, IndexError> {
    let params = GeneratorParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut n = 0;
    for class in DefectClass::ALL {
        let candidates = table.candidates(class);
        let total: f64 = candidates.iter().map(|m| m.priors[&class]).sum();
        for i in 0..per_class {
            let map_seed: u64 = rng.random();
            let mechanism = if candidates.is_empty() {
                None
            } else {
                let mut u = rng.random::<f64>() * total;
                let mut pick = candidates[candidates.len() - 1];
                for m in &candidates {
                    u -= m.priors[&class];
                    if u < 0.0 {
                        pick = m;
                        break;
                    }
                }
                Some(pick)
            };
            let map = render(class, &params, map_seed);
            let density = spatial_stats(&map).defect_density;
            index.upsert(DefectCase {
                case_id: format!("HIST-{}-{i:03}", class.name()),
                embedding: extract_features(&map),
                defect_class: class,
                severity: severity_for(Some(class), density),
                root_cause_narrative: mechanism.map(|m| m.summary.clone()).unwrap_or_default(),
                equipment_id: equipment_id(class, map_seed),
                timestamp_ms: HISTORY_EPOCH_MS - (i as i64) * 86_400_000,
                mechanism: mechanism.map(|m| m.key.clone()),
            })?;
            n += 1;
        }
    }
    Ok(n)
}
