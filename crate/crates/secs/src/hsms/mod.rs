//! HSMS-SS transport: framing, the connection state machine and a TCP driver.

pub mod frame;
pub mod session;
pub mod state;

pub use frame::{decode_frame, encode_frame, Decoded, FrameError, HsmsFrame, SType};
pub use session::{HsmsSession, SessionConfig, SessionError, SessionEvent};
pub use state::{
    connection_step, Action, ConnectionConfig, ConnectionState, ControlRequest, Event, Notice, Phase, ProtocolError,
    Role, Timeouts, TimerId,
};
