//! Equipment telemetry: events, the persistent log and change detection.

pub mod anomaly;
pub mod event;
pub mod store;

pub use anomaly::{detect_anomalies, detect_series, AnomalyKind, AnomalyScan, PvAnomaly};
pub use event::{ConvertError, EquipmentState, EventKind, TelemetryEvent};
pub use store::{StoreError, TelemetryLog};
