//! Stream/function envelopes.

use thiserror::Error;

use crate::item::{decode_item, encode_item, DecodeError, EncodeError, SecsItem};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MessageError {
    #[error("stream {0} out of range 0..=127")]
    StreamOutOfRange(u8),
    #[error("S{stream}F{function}: reply (even function) cannot set the wait bit")]
    WaitBitOnReply { stream: u8, function: u8 },
    #[error("S{stream}F{function}: expected a {expected} function number")]
    WrongParity {
        stream: u8,
        function: u8,
        expected: &'static str,
    },
    #[error("body has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SecsMessage {
    pub stream: u8,
    pub function: u8,
    pub wait_bit: bool,
    pub body: Option<SecsItem>,
}

impl SecsMessage {
    /// A primary message (odd function number).
    pub fn primary(stream: u8, function: u8, wait_bit: bool, body: Option<SecsItem>) -> Result<Self, MessageError> {
        if function.is_multiple_of(2) {
            return Err(MessageError::WrongParity {
                stream,
                function,
                expected: "odd",
            });
        }
        Self::validated(stream, function, wait_bit, body)
    }

    /// A reply (even function number, never waits).
    pub fn reply(stream: u8, function: u8, body: Option<SecsItem>) -> Result<Self, MessageError> {
        if !function.is_multiple_of(2) {
            return Err(MessageError::WrongParity {
                stream,
                function,
                expected: "even",
            });
        }
        Self::validated(stream, function, false, body)
    }

    /// Build without parity checks, for raw mode and decoding foreign traffic.
    /// The stream is masked to seven bits.
    pub fn raw(stream: u8, function: u8, wait_bit: bool, body: Option<SecsItem>) -> Self {
        SecsMessage {
            stream: stream & 0x7F,
            function,
            wait_bit,
            body,
        }
    }

    fn validated(stream: u8, function: u8, wait_bit: bool, body: Option<SecsItem>) -> Result<Self, MessageError> {
        if stream > 127 {
            return Err(MessageError::StreamOutOfRange(stream));
        }
        if wait_bit && function.is_multiple_of(2) {
            return Err(MessageError::WaitBitOnReply { stream, function });
        }
        Ok(SecsMessage {
            stream,
            function,
            wait_bit,
            body,
        })
    }

    pub fn is_primary(&self) -> bool {
        self.function % 2 == 1
    }

    /// `(stream, function + 1)` for the expected reply.
    pub fn reply_function(&self) -> (u8, u8) {
        (self.stream, self.function.wrapping_add(1))
    }

    pub fn encode_body(&self) -> Result<Vec<u8>, MessageError> {
        Ok(match &self.body {
            Some(item) => encode_item(item)?,
            None => Vec::new(),
        })
    }

    /// Parse a message body; an empty body means a header-only message. A body
    /// must be exactly one item.
    pub fn decode_body(bytes: &[u8]) -> Result<Option<SecsItem>, MessageError> {
        if bytes.is_empty() {
            return Ok(None);
        }
        let (item, used) = decode_item(bytes)?;
        if used != bytes.len() {
            return Err(MessageError::TrailingBytes(bytes.len() - used));
        }
        Ok(Some(item))
    }

    pub fn header(&self) -> String {
        format!(
            "S{}F{}{}",
            self.stream,
            self.function,
            if self.wait_bit { " W" } else { "" }
        )
    }
}
