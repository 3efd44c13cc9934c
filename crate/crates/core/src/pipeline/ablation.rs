//! The four input-modality conditions, run side by side.

use serde::Serialize;

use super::nodes::RunOptions;
use super::registry::ResourceRegistry;
use super::state::{ErrorEntry, FAState, Inputs, RootCauseHypothesis};
use super::{run_pipeline, EvidenceKind};
use crate::classes::DefectClass;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Visual description, telemetry and retrieval.
    Full,
    /// Visual description and retrieval.
    NoTelemetry,
    /// Visual description and telemetry.
    NoRetrieval,
    /// Visual description only.
    Baseline,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::Full,
        Condition::NoTelemetry,
        Condition::NoRetrieval,
        Condition::Baseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Full => "full",
            Condition::NoTelemetry => "no_telemetry",
            Condition::NoRetrieval => "no_retrieval",
            Condition::Baseline => "baseline",
        }
    }

    pub fn options(self) -> RunOptions {
        RunOptions {
            disable_telemetry: matches!(self, Condition::NoTelemetry | Condition::Baseline),
            disable_retrieval: matches!(self, Condition::NoRetrieval | Condition::Baseline),
        }
    }

    /// Evidence kinds a hypothesis may carry under this condition.
    pub fn allowed_evidence(self) -> Vec<EvidenceKind> {
        let o = self.options();
        let mut v = vec![EvidenceKind::ClassPrior];
        if !o.disable_telemetry {
            v.push(EvidenceKind::Telemetry);
        }
        if !o.disable_retrieval {
            v.push(EvidenceKind::Retrieval);
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CaseOutcome {
    pub case_id: String,
    pub equipment_id: String,
    pub defect_class: Option<DefectClass>,
    pub hypotheses: Vec<RootCauseHypothesis>,
    pub errors: Vec<ErrorEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionRun {
    pub condition: Condition,
    pub cases: Vec<CaseOutcome>,
}

/// Run every case under every condition. Reports are neither written nor
/// added to the index, so conditions cannot see each other's output.
pub fn run_ablation(registry: &ResourceRegistry, cases: &[(String, Inputs)]) -> Vec<ConditionRun> {
    let mut reg = registry.clone();
    reg.config.upsert = false;
    reg.config.report_dir = None;
    Condition::ALL
        .iter()
        .map(|&condition| ConditionRun {
            condition,
            cases: cases
                .iter()
                .map(|(case_id, inputs)| {
                    let s = run_pipeline(FAState::new(inputs.clone()), &reg, condition.options());
                    CaseOutcome {
                        case_id: case_id.clone(),
                        equipment_id: inputs.equipment_id.clone(),
                        defect_class: s.defect_class,
                        hypotheses: s.hypotheses.unwrap_or_default(),
                        errors: s.errors,
                    }
                })
                .collect(),
        })
        .collect()
}
