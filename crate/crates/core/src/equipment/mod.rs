//! Simulated SECS/GEM equipment and the host that collects from it.

pub mod host;
pub mod scenario;
pub mod serve;
pub mod sim;

pub use host::{collect, CollectError, CollectOptions, CollectSummary};
pub use scenario::{EquipmentScenario, Inspection, PvChannel, ScenarioError, ScheduledEvent, ScheduledKind};
pub use serve::{serve, serve_connection, ConnectionSummary, ServeOptions};
pub use sim::{emitted_messages, pv_value, simulate_into, tick, SimulateError};
