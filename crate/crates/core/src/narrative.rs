//! Deterministic text generation for defect descriptions and hypotheses.
//!
//! Descriptions always follow the same four parts in order: observed pattern,
//! spatial characteristics, probable mechanism, recommended action.

use serde_json::Value;
use thiserror::Error;

use crate::analytics::spatial::{principal_axis, SpatialStats};
use crate::classes::DefectClass;
use crate::wafer::{cell_offset, WaferMap};

pub const SECTION_DESCRIPTION: &str = "defect_description";
pub const SECTION_HYPOTHESIS: &str = "hypothesis";

#[derive(Debug, Error)]
pub enum NarrateError {
    #[error("missing context field {0:?}")]
    MissingField(&'static str),
    #[error("unknown section {0:?}")]
    UnknownSection(String),
    #[error("narration backend: {0}")]
    Backend(String),
}

pub trait Narrator: Send + Sync {
    fn name(&self) -> &str;
    fn narrate(&self, section: &str, context: &Value) -> Result<String, NarrateError>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct TemplateNarrator;

/// Default mechanism phrase and first corrective action for each class.
pub fn class_defaults(class: DefectClass) -> (&'static str, &'static str) {
    use DefectClass::*;
    match class {
        Scratch => (
            "mechanical contact during wafer handling",
            "inspect wafer handling contact points",
        ),
        ParticleContamination => ("a contamination event", "review chamber particle counts and clean"),
        EdgeCrack => (
            "dicing or handling damage at the wafer edge",
            "inspect dicing blade condition",
        ),
        CenterCluster => ("CMP or CVD bowl non-uniformity", "check center-zone process uniformity"),
        LocalCluster => (
            "localized plasma non-uniformity",
            "map chamber uniformity at the affected site",
        ),
        RingPattern => (
            "spin-coat or edge-bead removal issues",
            "verify edge-bead removal settings",
        ),
        RandomDefects => ("random particle events", "monitor particle levels on subsequent lots"),
        NearFullWafer => ("a process chemistry excursion", "hold the lot and audit chemistry logs"),
        NoDefect => ("no abnormal mechanism", "continue standard monitoring"),
    }
}

fn zone(stats: &SpatialStats) -> &'static str {
    let total: f64 = stats.radial_hist.iter().sum();
    if total <= 0.0 {
        return "no particular";
    }
    let centroid = stats
        .radial_hist
        .iter()
        .enumerate()
        .map(|(i, v)| (i as f64 + 0.5) / stats.radial_hist.len() as f64 * v)
        .sum::<f64>()
        / total;
    if stats.edge_band_density > 0.0 && centroid > 0.85 {
        "outer edge"
    } else if centroid < 0.3 {
        "central"
    } else if centroid < 0.7 {
        "mid-radius"
    } else {
        "outer"
    }
}

/// Extent of the failed region along its principal axis, in die.
pub fn major_extent(map: &WaferMap) -> f64 {
    let pts: Vec<(f64, f64)> = map
        .fail_positions()
        .into_iter()
        .map(|(r, c)| cell_offset(r, c))
        .collect();
    principal_axis(&pts).map_or(0.0, |a| (12.0 * a.major_variance).sqrt())
}

/// Context object consumed by the description section.
pub fn description_context(
    class: DefectClass,
    map: &WaferMap,
    stats: &SpatialStats,
    mechanism: &str,
    action: &str,
) -> Value {
    serde_json::json!({
        "defect_class": class.name(),
        "failed_die": map.fail_count(),
        "on_wafer_die": map.on_wafer_count(),
        "defect_density": stats.defect_density,
        "zone": zone(stats),
        "largest_component_fraction": stats.largest_component_fraction,
        "linearity": stats.linearity,
        "extent_die": major_extent(map),
        "mechanism": mechanism,
        "action": action,
    })
}

fn field<'a>(ctx: &'a Value, key: &'static str) -> Result<&'a Value, NarrateError> {
    ctx.get(key).ok_or(NarrateError::MissingField(key))
}

fn text<'a>(ctx: &'a Value, key: &'static str) -> Result<&'a str, NarrateError> {
    field(ctx, key)?.as_str().ok_or(NarrateError::MissingField(key))
}

fn number(ctx: &Value, key: &'static str) -> Result<f64, NarrateError> {
    field(ctx, key)?.as_f64().ok_or(NarrateError::MissingField(key))
}

impl TemplateNarrator {
    fn description(&self, ctx: &Value) -> Result<String, NarrateError> {
        let class: DefectClass = text(ctx, "defect_class")?
            .parse()
            .map_err(|_| NarrateError::MissingField("defect_class"))?;
        let failed = number(ctx, "failed_die")?;
        let density = number(ctx, "defect_density")? * 100.0;
        let zone = text(ctx, "zone")?;
        let lcf = number(ctx, "largest_component_fraction")? * 100.0;
        let linearity = number(ctx, "linearity")?;
        let extent = number(ctx, "extent_die")?;
        let mechanism = text(ctx, "mechanism")?;
        let action = text(ctx, "action")?;

        let observed = if class == DefectClass::NoDefect {
            format!(
                "Observed pattern: no defect, with {failed:.0} failed die ({density:.1}% of on-wafer die) and {:.1}% good die.",
                100.0 - density
            )
        } else {
            format!(
                "Observed pattern: {} with {failed:.0} failed die ({density:.1}% of on-wafer die).",
                class.display_name()
            )
        };
        let spatial = if failed == 0.0 {
            "Spatial characteristics: no failed die are present.".to_string()
        } else {
            format!(
                "Spatial characteristics: failures sit in the {zone} zone and span about {extent:.0} die along the principal axis; the largest connected cluster holds {lcf:.0}% of failed die (linearity {linearity:.2})."
            )
        };
        Ok(format!(
            "{observed} {spatial} Probable mechanism: {mechanism}. Recommended action: {action}."
        ))
    }

    fn hypothesis(&self, ctx: &Value) -> Result<String, NarrateError> {
        let mechanism = text(ctx, "mechanism")?;
        let class = text(ctx, "defect_class")?;
        let evidence = field(ctx, "evidence")?
            .as_array()
            .ok_or(NarrateError::MissingField("evidence"))?;
        let details: Vec<&str> = evidence
            .iter()
            .filter_map(|e| e.get("detail").and_then(Value::as_str))
            .collect();
        Ok(format!(
            "{} pattern attributed to {mechanism}; supporting evidence: {}.",
            class.replace('_', " "),
            if details.is_empty() {
                "none".to_string()
            } else {
                details.join("; ")
            }
        ))
    }
}

impl Narrator for TemplateNarrator {
    fn name(&self) -> &str {
        "template"
    }

    fn narrate(&self, section: &str, context: &Value) -> Result<String, NarrateError> {
        match section {
            SECTION_DESCRIPTION => self.description(context),
            SECTION_HYPOTHESIS => self.hypothesis(context),
            other => Err(NarrateError::UnknownSection(other.to_string())),
        }
    }
}
