//! Five-node failure-analysis pipeline over a shared, append-only state.

pub mod ablation;
pub mod cases;
pub mod latency;
pub mod nodes;
pub mod registry;
pub mod report;
pub mod sidecar;
pub mod state;
pub mod tables;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

pub use ablation::{run_ablation, CaseOutcome, Condition, ConditionRun};
pub use nodes::{severity_for, RunOptions};
pub use registry::{Embedder, PipelineConfig, ResourceRegistry, TelemetrySource, Weights};
pub use report::FAReport;
pub use state::{Evidence, EvidenceKind, FAState, Inputs, MapInput, RootCauseHypothesis, NODES};
pub use tables::{CorrelationTable, RecipeTable};

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

/// Run `node` on `state`; a panic becomes an error entry on the input state.
pub fn guarded(node: &str, state: &FAState, f: impl FnOnce(&FAState) -> FAState) -> FAState {
    match catch_unwind(AssertUnwindSafe(|| f(state))) {
        Ok(next) => next,
        Err(payload) => {
            let mut s = state.clone();
            s.push_error(node, format!("node panicked: {}", panic_message(payload.as_ref())));
            s
        }
    }
}

fn step(node: &str, state: &FAState, registry: &ResourceRegistry, options: RunOptions) -> FAState {
    match node {
        state::NODE_DESCRIBE => nodes::defect_describer(state, registry),
        state::NODE_ROOT_CAUSE => nodes::root_cause_analyzer(state, registry, options),
        state::NODE_SEVERITY => nodes::severity_classifier(state),
        state::NODE_RECIPE => nodes::recipe_advisor(state, registry),
        state::NODE_REPORT => nodes::report_generator(state, registry),
        other => unreachable!("unknown node {other}"),
    }
}

/// Run all five nodes in order. Never fails: problems end up in
/// `errors` and the returned state always carries a report.
pub fn run_pipeline(initial: FAState, registry: &ResourceRegistry, options: RunOptions) -> FAState {
    run_with(initial, registry, options, |node, state| {
        step(node, state, registry, options)
    })
}

/// As `run_pipeline`, with each node supplied by `node_fn`. Used to inject
/// faults.
pub fn run_with(
    initial: FAState,
    registry: &ResourceRegistry,
    _options: RunOptions,
    mut node_fn: impl FnMut(&str, &FAState) -> FAState,
) -> FAState {
    let mut state = initial;
    for node in NODES {
        let started = Instant::now();
        state = guarded(node, &state, |s| node_fn(node, s));
        state
            .node_latencies
            .insert(node.to_string(), started.elapsed().as_secs_f64());
    }
    finalize(state, registry)
}

/// Rebuild the report with the final latencies and rewrite it if it was
/// written.
fn finalize(mut state: FAState, registry: &ResourceRegistry) -> FAState {
    let report = FAReport::from_state(&state);
    if let (Some(dir), true) = (&registry.config.report_dir, state.report_paths.is_some()) {
        if let Err(e) = report::write(&report, dir) {
            state.push_error(state::NODE_REPORT, format!("rewriting report: {e}"));
        }
    }
    state.report = Some(FAReport::from_state(&state));
    state
}
