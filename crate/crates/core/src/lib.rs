//! Failure-analysis engine: wafer-map synthesis and analytics, equipment
//! telemetry, case retrieval and the report pipeline.

pub mod analytics;
pub mod classes;
pub mod equipment;
pub mod index;
pub mod narrative;
pub mod pipeline;
pub mod synth;
pub mod telemetry;
pub mod wafer;

pub use classes::{DefectClass, Severity};
pub use wafer::WaferMap;
