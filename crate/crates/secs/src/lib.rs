//! SECS-II messages and their HSMS transport.

pub mod hsms;
pub mod item;
pub mod message;
pub mod sml;

pub use item::{decode_item, decode_item_with_depth, encode_item, DecodeError, EncodeError, FormatCode, SecsItem};
pub use message::{MessageError, SecsMessage};
pub use sml::{render_item, render_sml};
