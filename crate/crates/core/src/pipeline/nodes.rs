//! The five analysis nodes. Each takes the current state and returns a
//! superset of it.

use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexMap;
use serde_json::json;

use super::registry::ResourceRegistry;
use super::report::{self, FAReport};
use super::state::*;
use super::tables::{NO_ACTION_KEY, NO_ACTION_VALUE, WILDCARD};
use crate::analytics::{features_from_stats, spatial_stats};
use crate::classes::{DefectClass, Severity};
use crate::index::DefectCase;
use crate::narrative::{
    class_defaults, description_context, Narrator, TemplateNarrator, SECTION_DESCRIPTION, SECTION_HYPOTHESIS,
};
use crate::telemetry::{anomaly::channel_series, detect_series, AnomalyKind, EventKind, TelemetryEvent};
use crate::wafer::WaferMap;

/// Mechanism reported when nothing is known about the defect.
pub const UNKNOWN_MECHANISM: &str = "unknown";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub disable_telemetry: bool,
    pub disable_retrieval: bool,
}

/// Narrate with the configured backend, falling back to templates. A backend
/// failure is recorded once per node.
fn narrate(
    registry: &ResourceRegistry,
    state: &mut FAState,
    node: &str,
    warned: &mut bool,
    section: &str,
    ctx: &serde_json::Value,
) -> Option<String> {
    match registry.narrator.narrate(section, ctx) {
        Ok(text) => return Some(text),
        Err(e) if registry.narrator.name() != TemplateNarrator.name() => {
            if !*warned {
                state.push_error(node, format!("narration backend failed, used templates: {e}"));
                *warned = true;
            }
        }
        Err(e) => {
            state.push_error(node, format!("narration failed: {e}"));
            return None;
        }
    }
    match TemplateNarrator.narrate(section, ctx) {
        Ok(text) => Some(text),
        Err(e) => {
            state.push_error(node, format!("template narration failed: {e}"));
            None
        }
    }
}

fn load_map(state: &FAState) -> Result<WaferMap, String> {
    match &state.inputs.map {
        None => Err("no wafer map supplied".into()),
        Some(MapInput::Inline(m)) => Ok(m.clone()),
        Some(MapInput::Path(p)) => WaferMap::load(p).map_err(|e| format!("unreadable image {}: {e}", p.display())),
    }
}

pub fn defect_describer(state: &FAState, registry: &ResourceRegistry) -> FAState {
    let mut s = state.clone();
    let map = match load_map(state) {
        Ok(m) => m,
        Err(e) => {
            s.push_error(NODE_DESCRIBE, e);
            return s;
        }
    };
    let stats = spatial_stats(&map);
    let features = features_from_stats(&stats);

    match &registry.classifier {
        None => s.push_error(NODE_DESCRIBE, "classifier model not loaded"),
        Some(model) => match model.predict(&features) {
            Ok(p) => {
                let class = model
                    .class_names
                    .get(p.class_index)
                    .and_then(|n| n.parse::<DefectClass>().ok());
                match class {
                    Some(c) => {
                        s.defect_class = Some(c);
                        s.confidence = Some(p.confidence);
                        s.class_distribution = Some(
                            model
                                .class_names
                                .iter()
                                .cloned()
                                .zip(p.distribution.iter().copied())
                                .collect(),
                        );
                    }
                    None => s.push_error(
                        NODE_DESCRIBE,
                        format!("model predicted unknown class index {}", p.class_index),
                    ),
                }
            }
            Err(e) => s.push_error(NODE_DESCRIBE, format!("classification failed: {e}")),
        },
    }

    let embedding = match &registry.embedder {
        None => features.clone(),
        Some(emb) => match emb.embed(&map) {
            Ok(v) => v,
            Err(e) => {
                s.push_error(
                    NODE_DESCRIBE,
                    format!("embedding backend failed, used spatial features: {e}"),
                );
                features.clone()
            }
        },
    };

    if let Some(class) = s.defect_class {
        let candidates = registry.correlation.candidates(class);
        let mechanism = if candidates.is_empty() {
            class_defaults(class).0.to_string()
        } else {
            candidates
                .iter()
                .take(2)
                .map(|m| m.key.as_str())
                .collect::<Vec<_>>()
                .join(" or ")
        };
        let ctx = description_context(class, &map, &stats, &mechanism, class_defaults(class).1);
        let mut warned = false;
        s.defect_description = narrate(registry, &mut s, NODE_DESCRIBE, &mut warned, SECTION_DESCRIPTION, &ctx);
    }

    s.features = Some(features);
    s.embedding = Some(embedding);
    s.spatial_stats = Some(stats);
    s
}

fn recency(age_ms: i64, window_ms: i64) -> f64 {
    if window_ms <= 0 {
        return 0.0;
    }
    (1.0 - age_ms as f64 / window_ms as f64).clamp(0.0, 1.0)
}

fn ago(age_ms: i64) -> String {
    let min = (age_ms as f64 / 60_000.0).round() as i64;
    if min >= 120 && min % 60 == 0 {
        format!("{} h", min / 60)
    } else {
        format!("{min} min")
    }
}

fn zfmt(z: f64) -> String {
    if z > 999.0 {
        "z > 999".into()
    } else {
        format!("z = {z:.1}")
    }
}

fn clock(ms: i64) -> String {
    chrono::DateTime::<chrono::Utc>::from_timestamp_millis(ms)
        .map(|t| t.format("%H:%M:%SZ").to_string())
        .unwrap_or_else(|| ms.to_string())
}

#[derive(Default)]
struct Support {
    telemetry: f64,
    retrieval: f64,
    evidence: Vec<(f64, Evidence)>,
}

fn summarize_telemetry(
    events: Vec<TelemetryEvent>,
    equipment_id: &str,
    start: i64,
    end: i64,
    threshold: f64,
) -> (TelemetrySummary, BTreeMap<String, Vec<(i64, f64)>>) {
    let mut summary = TelemetrySummary {
        window_start_ms: start,
        window_end_ms: end,
        ..Default::default()
    };
    let mut channels = BTreeSet::new();
    for e in &events {
        match &e.kind {
            EventKind::EventReport { pv_values, .. } => {
                summary.report_count += 1;
                channels.extend(pv_values.keys().cloned());
            }
            EventKind::Alarm { .. } => summary.alarms.push(e.clone()),
            EventKind::StateTransition { .. } => summary.transitions.push(e.clone()),
        }
    }
    let mut series = BTreeMap::new();
    for ch in channels {
        let s = channel_series(&events, &ch);
        summary
            .anomalies
            .extend(detect_series(equipment_id, &ch, &s, threshold).anomalies);
        series.insert(ch, s);
    }
    (summary, series)
}

pub fn root_cause_analyzer(state: &FAState, registry: &ResourceRegistry, options: RunOptions) -> FAState {
    let mut s = state.clone();
    let cfg = &registry.config;
    let table = &registry.correlation;

    let Some(class) = state.defect_class else {
        s.push_error(NODE_ROOT_CAUSE, "no defect classification; root cause unknown");
        s.hypotheses = Some(vec![RootCauseHypothesis {
            mechanism: UNKNOWN_MECHANISM.into(),
            narrative: "Root cause could not be analysed because the defect was not classified.".into(),
            score: 0.0,
            evidence: vec![Evidence {
                kind: EvidenceKind::ClassPrior,
                detail: "no defect classification available".into(),
            }],
        }]);
        return s;
    };

    let mut support: BTreeMap<String, Support> = BTreeMap::new();
    for m in table.candidates(class) {
        support.entry(m.key.clone()).or_default();
    }

    if !options.disable_telemetry {
        let end = state.inputs.inspection_time_ms;
        let start = end - cfg.window_ms;
        let eq = &state.inputs.equipment_id;
        match registry.telemetry.as_ref().map(|t| t.window(eq, start, end)) {
            None => s.push_error(NODE_ROOT_CAUSE, "telemetry store unavailable"),
            Some(Err(e)) => s.push_error(NODE_ROOT_CAUSE, format!("telemetry query failed: {e}")),
            Some(Ok(events)) if events.is_empty() => s.push_error(
                NODE_ROOT_CAUSE,
                format!("no telemetry for {eq} between {} and {}", rfc3339(start), rfc3339(end)),
            ),
            Some(Ok(events)) => {
                let (summary, series) = summarize_telemetry(events, eq, start, end, cfg.anomaly_threshold);
                for alarm in &summary.alarms {
                    let EventKind::Alarm {
                        alarm_id,
                        set: true,
                        text,
                    } = &alarm.kind
                    else {
                        continue;
                    };
                    let age = end - alarm.timestamp_ms;
                    let w = recency(age, cfg.window_ms);
                    for m in table.by_alarm(*alarm_id) {
                        let e = support.entry(m.key.clone()).or_default();
                        e.telemetry = e.telemetry.max(w);
                        e.evidence.push((
                            w,
                            Evidence {
                                kind: EvidenceKind::Telemetry,
                                detail: format!(
                                    "alarm {alarm_id} ({text}) set at {}, {} before inspection",
                                    clock(alarm.timestamp_ms),
                                    ago(age)
                                ),
                            },
                        ));
                    }
                }
                for a in &summary.anomalies {
                    let at = match a.kind {
                        AnomalyKind::Drift => a.window_end_ms,
                        _ => a.window_start_ms,
                    };
                    let age = end - at;
                    let w = recency(age, cfg.window_ms);
                    let last = series.get(&a.channel).and_then(|v| v.last()).map(|p| p.1);
                    let detail = match a.kind {
                        AnomalyKind::Step => format!(
                            "step change of {:+.2} on {} at {}, {} before inspection ({})",
                            a.magnitude,
                            a.channel,
                            clock(at),
                            ago(age),
                            zfmt(a.z_score)
                        ),
                        AnomalyKind::Drift => format!(
                            "drift of {:+.2} on {} across the window, latest value {:.2} ({})",
                            a.magnitude,
                            a.channel,
                            last.unwrap_or(f64::NAN),
                            zfmt(a.z_score)
                        ),
                        AnomalyKind::OutOfBand => format!(
                            "out-of-band value on {} at {}, {} before inspection ({})",
                            a.channel,
                            clock(at),
                            ago(age),
                            zfmt(a.z_score)
                        ),
                    };
                    for m in table.by_channel(&a.channel) {
                        let e = support.entry(m.key.clone()).or_default();
                        e.telemetry = e.telemetry.max(w);
                        e.evidence.push((
                            w,
                            Evidence {
                                kind: EvidenceKind::Telemetry,
                                detail: detail.clone(),
                            },
                        ));
                    }
                }
                s.telemetry_summary = Some(summary);
            }
        }
    }

    if !options.disable_retrieval {
        match (&registry.index, &state.embedding) {
            (None, _) => s.push_error(NODE_ROOT_CAUSE, "vector index unavailable"),
            (_, None) => s.push_error(NODE_ROOT_CAUSE, "no embedding to query the vector index with"),
            (Some(index), Some(_)) if index.is_empty() => s.push_error(NODE_ROOT_CAUSE, "vector index is empty"),
            (Some(index), Some(emb)) => match index.query_top_k(emb, cfg.top_k) {
                Err(e) => s.push_error(NODE_ROOT_CAUSE, format!("retrieval failed: {e}")),
                Ok(hits) => {
                    let mut groups: BTreeMap<&str, Vec<&crate::index::ScoredCase>> = BTreeMap::new();
                    for h in &hits {
                        if let Some(m) = h.case.mechanism.as_deref() {
                            groups.entry(m).or_default().push(h);
                        }
                    }
                    for (m, cases) in groups {
                        let mean = cases.iter().map(|c| c.similarity).sum::<f64>() / cases.len() as f64;
                        let e = support.entry(m.to_string()).or_default();
                        e.retrieval = mean;
                        let ids: Vec<&str> = cases.iter().map(|c| c.case.case_id.as_str()).collect();
                        e.evidence.push((
                            mean,
                            Evidence {
                                kind: EvidenceKind::Retrieval,
                                detail: format!(
                                    "{} similar past case{} (mean similarity {mean:.3}): {}",
                                    cases.len(),
                                    if cases.len() == 1 { "" } else { "s" },
                                    ids.join(", ")
                                ),
                            },
                        ));
                    }
                    s.retrieved_cases = Some(hits);
                }
            },
        }
    }

    let w = cfg.weights;
    let norm = if w.total() > 0.0 { w.total() } else { 1.0 };
    let mut ranked: Vec<(String, f64, Vec<Evidence>)> = support
        .into_iter()
        .map(|(key, sup)| {
            let prior = table.prior(&key, class);
            let score = (w.telemetry * sup.telemetry + w.retrieval * sup.retrieval + w.prior * prior) / norm;
            let mut evidence: Vec<(f64, Evidence)> = sup.evidence;
            evidence.sort_by(|a, b| b.0.total_cmp(&a.0));
            evidence.dedup_by(|a, b| a.1 == b.1);
            let mut ev: Vec<Evidence> = evidence.into_iter().take(4).map(|e| e.1).collect();
            if prior > 0.0 {
                ev.push(Evidence {
                    kind: EvidenceKind::ClassPrior,
                    detail: format!("prior {prior:.2} for {} defects", class.name()),
                });
            }
            (key, score, ev)
        })
        .filter(|(_, _, ev)| !ev.is_empty())
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(cfg.max_hypotheses.max(1));

    let mut warned = false;
    let mut hypotheses = Vec::with_capacity(ranked.len());
    for (mechanism, score, evidence) in ranked {
        let summary = table.get(&mechanism).map_or(mechanism.as_str(), |m| m.summary.as_str());
        let ctx = json!({
            "mechanism": format!("{mechanism} ({summary})"),
            "defect_class": class.name(),
            "evidence": evidence,
        });
        let narrative =
            narrate(registry, &mut s, NODE_ROOT_CAUSE, &mut warned, SECTION_HYPOTHESIS, &ctx).unwrap_or_default();
        hypotheses.push(RootCauseHypothesis {
            mechanism,
            narrative,
            score,
            evidence,
        });
    }
    s.hypotheses = Some(hypotheses);
    s
}

/// Severity band for a failed-die fraction. 5% and 25% both fall in MAJOR.
pub fn severity_for(class: Option<DefectClass>, density: f64) -> Severity {
    let impact = 100.0 * density;
    if density == 0.0 || (class == Some(DefectClass::NoDefect) && impact < 2.0) {
        Severity::None
    } else if impact > 25.0 {
        Severity::Critical
    } else if impact >= 5.0 {
        Severity::Major
    } else {
        Severity::Minor
    }
}

pub fn severity_classifier(state: &FAState) -> FAState {
    let mut s = state.clone();
    match &state.spatial_stats {
        None => s.push_error(NODE_SEVERITY, "no spatial statistics; severity unknown"),
        Some(stats) => {
            s.yield_impact_pct = Some(100.0 * stats.defect_density);
            s.severity = Some(severity_for(state.defect_class, stats.defect_density));
        }
    }
    s
}

pub fn recipe_advisor(state: &FAState, registry: &ResourceRegistry) -> FAState {
    let mut s = state.clone();
    if state.severity == Some(Severity::None) {
        s.recommendations = Some(IndexMap::from([(
            NO_ACTION_KEY.to_string(),
            NO_ACTION_VALUE.to_string(),
        )]));
        return s;
    }
    let top = state.hypotheses.as_ref().and_then(|h| h.first());
    let mechanism = match top {
        Some(h) => h.mechanism.as_str(),
        None => {
            s.push_error(NODE_RECIPE, "no root-cause hypotheses; generic monitoring advised");
            WILDCARD
        }
    };
    let actions = registry.recipes.actions(state.defect_class, mechanism);
    if actions.is_empty() {
        s.push_error(NODE_RECIPE, format!("no recipe entry for mechanism {mechanism:?}"));
    }
    s.recommendations = Some(actions);
    s
}

/// Assemble the report, write it if a report directory is configured and
/// add the case to the vector index.
pub fn report_generator(state: &FAState, registry: &ResourceRegistry) -> FAState {
    let mut s = state.clone();
    let report = FAReport::from_state(&s);
    if let Some(dir) = &registry.config.report_dir {
        match report::write(&report, dir) {
            Ok(paths) => s.report_paths = Some(paths),
            Err(e) => s.push_error(NODE_REPORT, format!("writing report: {e}")),
        }
    }
    if registry.config.upsert {
        if let Err(e) = upsert(&s, registry, &report) {
            s.push_error(NODE_REPORT, format!("knowledge-base upsert skipped: {e}"));
        }
    }
    s.report = Some(FAReport::from_state(&s));
    s
}

fn upsert(state: &FAState, registry: &ResourceRegistry, report: &FAReport) -> Result<(), String> {
    let index = registry.index.as_ref().ok_or("vector index unavailable")?;
    let embedding = state.embedding.clone().ok_or("no embedding")?;
    let defect_class = state.defect_class.ok_or("no defect class")?;
    let severity = state.severity.ok_or("no severity")?;
    let top = state.hypotheses.as_ref().and_then(|h| h.first());
    index
        .upsert(DefectCase {
            case_id: report.report_id.clone(),
            embedding,
            defect_class,
            severity,
            root_cause_narrative: top.map(|h| h.narrative.clone()).unwrap_or_default(),
            equipment_id: state.inputs.equipment_id.clone(),
            timestamp_ms: state.inputs.timestamp_ms,
            mechanism: top.map(|h| h.mechanism.clone()).filter(|m| m != UNKNOWN_MECHANISM),
        })
        .map_err(|e| e.to_string())
}
