//! Scenario files (TOML).
//!
//! ```toml
//! equipment_id = "EQ-INSP-01"
//! base_state = "processing"       # idle | processing | alarmed
//! tick_interval = 2.0             # seconds
//! seed = 11
//! start_time = "2024-03-14T06:00:00Z"
//! ticks = 3600                    # length of an offline run
//! ceid = 100                      # CEID of the periodic report
//!
//! [inspection]                    # optional; drives `run` and the demos
//! time = "2024-03-14T08:00:00Z"
//! defect_class = "scratch"
//! map_seed = 1
//! lot_id = "LOT-2024-017"
//! wafer_id = "W07"
//!
//! [[pv_channels]]
//! name = "chuck_vacuum_pressure"
//! unit = "kPa"
//! nominal = 20.0
//! noise_stddev = 0.2
//! drift_per_tick = 0.0
//!
//! [[scheduled_events]]
//! at_tick = 2250
//! kind = "pv_step"                # state_transition | alarm | alarm_clear | pv_step
//! channel = "chuck_vacuum_pressure"
//! delta = 4.0
//! ```

use std::collections::HashSet;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classes::DefectClass;
use crate::telemetry::EquipmentState;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("cannot read scenario {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PvChannel {
    pub name: String,
    #[serde(default)]
    pub unit: String,
    pub nominal: f64,
    #[serde(default)]
    pub noise_stddev: f64,
    #[serde(default)]
    pub drift_per_tick: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduledKind {
    StateTransition { to: EquipmentState },
    Alarm { alarm_id: u32, text: String },
    AlarmClear { alarm_id: u32 },
    PvStep { channel: String, delta: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduledEvent {
    pub at_tick: u64,
    #[serde(flatten)]
    pub kind: ScheduledKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inspection {
    pub time: DateTime<Utc>,
    pub defect_class: DefectClass,
    #[serde(default)]
    pub map_seed: u64,
    #[serde(default = "default_lot")]
    pub lot_id: String,
    #[serde(default = "default_wafer")]
    pub wafer_id: String,
}

fn default_lot() -> String {
    "LOT-2024-001".into()
}

fn default_wafer() -> String {
    "W01".into()
}

fn default_interval() -> f64 {
    2.0
}

fn default_start() -> DateTime<Utc> {
    DateTime::<Utc>::from_timestamp(1_704_067_200, 0).expect("valid epoch")
}

fn default_ticks() -> u64 {
    100
}

fn default_ceid() -> u32 {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquipmentScenario {
    pub equipment_id: String,
    #[serde(default)]
    pub base_state: EquipmentState,
    #[serde(default = "default_interval")]
    pub tick_interval: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start_time: DateTime<Utc>,
    #[serde(default = "default_ticks")]
    pub ticks: u64,
    #[serde(default = "default_ceid")]
    pub ceid: u32,
    #[serde(default)]
    pub inspection: Option<Inspection>,
    #[serde(default)]
    pub pv_channels: Vec<PvChannel>,
    #[serde(default)]
    pub scheduled_events: Vec<ScheduledEvent>,
}

impl EquipmentScenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let de = toml::Deserializer::new(text);
        let mut sc: EquipmentScenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            schema(
                if path == "." { "<root>".to_string() } else { path },
                e.inner().message(),
            )
        })?;
        sc.validate()?;
        // Stable, so same-tick events keep file order.
        sc.scheduled_events.sort_by_key(|e| e.at_tick);
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        if self.equipment_id.trim().is_empty() {
            return Err(schema("equipment_id", "must not be empty"));
        }
        if !(self.tick_interval > 0.0 && self.tick_interval.is_finite()) {
            return Err(schema("tick_interval", "must be positive"));
        }
        let mut names = HashSet::new();
        for (i, ch) in self.pv_channels.iter().enumerate() {
            if ch.name.is_empty() {
                return Err(schema(format!("pv_channels[{i}].name"), "must not be empty"));
            }
            if !names.insert(ch.name.as_str()) {
                return Err(schema(
                    format!("pv_channels[{i}].name"),
                    format!("duplicate channel {:?}", ch.name),
                ));
            }
            if ch.noise_stddev.is_nan() || ch.noise_stddev < 0.0 {
                return Err(schema(format!("pv_channels[{i}].noise_stddev"), "must be non-negative"));
            }
            if !ch.nominal.is_finite() || !ch.drift_per_tick.is_finite() {
                return Err(schema(format!("pv_channels[{i}]"), "values must be finite"));
            }
        }
        for (i, ev) in self.scheduled_events.iter().enumerate() {
            if let ScheduledKind::PvStep { channel, delta } = &ev.kind {
                if !names.contains(channel.as_str()) {
                    return Err(schema(
                        format!("scheduled_events[{i}].channel"),
                        format!("unknown channel {channel:?}"),
                    ));
                }
                if !delta.is_finite() {
                    return Err(schema(format!("scheduled_events[{i}].delta"), "must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn channel_names(&self) -> Vec<String> {
        self.pv_channels.iter().map(|c| c.name.clone()).collect()
    }

    pub fn start_ms(&self) -> i64 {
        self.start_time.timestamp_millis()
    }

    /// Scenario clock at the start of `tick`.
    pub fn tick_time_ms(&self, tick: u64) -> i64 {
        self.start_ms() + (tick as f64 * self.tick_interval * 1000.0).round() as i64
    }
}
