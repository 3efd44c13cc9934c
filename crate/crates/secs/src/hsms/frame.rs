//! HSMS message framing: a 4-byte big-endian length, a 10-byte header, body.

use thiserror::Error;

use crate::message::{MessageError, SecsMessage};

pub const HEADER_LEN: usize = 10;
pub const DEFAULT_MAX_FRAME_LEN: usize = 16 * 1024 * 1024;
/// Session id carried by control transactions.
pub const CONTROL_SESSION_ID: u16 = 0xFFFF;

/// Header byte 5, the session type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum SType {
    Data = 0,
    SelectReq = 1,
    SelectRsp = 2,
    DeselectReq = 3,
    DeselectRsp = 4,
    LinktestReq = 5,
    LinktestRsp = 6,
    RejectReq = 7,
    SeparateReq = 9,
}

impl SType {
    pub fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0 => SType::Data,
            1 => SType::SelectReq,
            2 => SType::SelectRsp,
            3 => SType::DeselectReq,
            4 => SType::DeselectRsp,
            5 => SType::LinktestReq,
            6 => SType::LinktestRsp,
            7 => SType::RejectReq,
            9 => SType::SeparateReq,
            _ => return None,
        })
    }
}

/// Reason codes carried in byte 3 of a Reject.req.
pub mod reject_reason {
    pub const STYPE_NOT_SUPPORTED: u8 = 1;
    pub const PTYPE_NOT_SUPPORTED: u8 = 2;
    pub const TRANSACTION_NOT_OPEN: u8 = 3;
    pub const ENTITY_NOT_SELECTED: u8 = 4;
}

/// Select.rsp status codes.
pub mod select_status {
    pub const OK: u8 = 0;
    pub const ALREADY_ACTIVE: u8 = 1;
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("s_type {0} is not a defined HSMS session type")]
    InvalidSType(u8),
    #[error("control frame (s_type {0}) must not carry a body")]
    NonEmptyControlBody(u8),
    #[error("frame length {length} exceeds the configured maximum {max}")]
    FrameTooLarge { length: usize, max: usize },
    #[error("frame length {0} is shorter than the 10-byte header")]
    FrameTooShort(usize),
    #[error("frame is not a data message (s_type {0})")]
    NotData(u8),
    #[error(transparent)]
    Message(#[from] MessageError),
}

/// One HSMS frame. The length prefix is derived (`10 + body.len()`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HsmsFrame {
    pub session_id: u16,
    pub header_byte2: u8,
    pub header_byte3: u8,
    pub p_type: u8,
    pub s_type: u8,
    pub system_bytes: u32,
    pub body: Vec<u8>,
}

impl HsmsFrame {
    pub fn control(s_type: SType, session_id: u16, system_bytes: u32) -> Self {
        HsmsFrame {
            session_id,
            header_byte2: 0,
            header_byte3: 0,
            p_type: 0,
            s_type: s_type as u8,
            system_bytes,
            body: Vec::new(),
        }
    }

    pub fn select_req(system_bytes: u32) -> Self {
        Self::control(SType::SelectReq, CONTROL_SESSION_ID, system_bytes)
    }

    pub fn select_rsp(system_bytes: u32, status: u8) -> Self {
        let mut f = Self::control(SType::SelectRsp, CONTROL_SESSION_ID, system_bytes);
        f.header_byte3 = status;
        f
    }

    pub fn deselect_rsp(system_bytes: u32, status: u8) -> Self {
        let mut f = Self::control(SType::DeselectRsp, CONTROL_SESSION_ID, system_bytes);
        f.header_byte3 = status;
        f
    }

    pub fn linktest_req(system_bytes: u32) -> Self {
        Self::control(SType::LinktestReq, CONTROL_SESSION_ID, system_bytes)
    }

    pub fn linktest_rsp(system_bytes: u32) -> Self {
        Self::control(SType::LinktestRsp, CONTROL_SESSION_ID, system_bytes)
    }

    /// Reject the given frame; byte 2 names the offending s_type (or p_type
    /// when that was the problem), byte 3 the reason.
    pub fn reject_req(rejected: &HsmsFrame, reason: u8) -> Self {
        let mut f = Self::control(SType::RejectReq, rejected.session_id, rejected.system_bytes);
        f.header_byte2 = if reason == reject_reason::PTYPE_NOT_SUPPORTED {
            rejected.p_type
        } else {
            rejected.s_type
        };
        f.header_byte3 = reason;
        f
    }

    pub fn separate_req(system_bytes: u32) -> Self {
        Self::control(SType::SeparateReq, CONTROL_SESSION_ID, system_bytes)
    }

    pub fn data(session_id: u16, msg: &SecsMessage, system_bytes: u32) -> Result<Self, FrameError> {
        Ok(HsmsFrame {
            session_id,
            header_byte2: (msg.stream & 0x7F) | if msg.wait_bit { 0x80 } else { 0 },
            header_byte3: msg.function,
            p_type: 0,
            s_type: SType::Data as u8,
            system_bytes,
            body: msg.encode_body()?,
        })
    }

    pub fn stype(&self) -> Option<SType> {
        SType::from_byte(self.s_type)
    }

    pub fn is_data(&self) -> bool {
        self.s_type == SType::Data as u8
    }

    /// Value of the 4-byte length prefix.
    pub fn length(&self) -> u32 {
        (HEADER_LEN + self.body.len()) as u32
    }

    pub fn to_message(&self) -> Result<SecsMessage, FrameError> {
        if !self.is_data() {
            return Err(FrameError::NotData(self.s_type));
        }
        Ok(SecsMessage::raw(
            self.header_byte2 & 0x7F,
            self.header_byte3,
            self.header_byte2 & 0x80 != 0,
            SecsMessage::decode_body(&self.body)?,
        ))
    }
}

pub fn encode_frame(frame: &HsmsFrame) -> Result<Vec<u8>, FrameError> {
    let stype = frame.stype().ok_or(FrameError::InvalidSType(frame.s_type))?;
    if stype != SType::Data && !frame.body.is_empty() {
        return Err(FrameError::NonEmptyControlBody(frame.s_type));
    }
    let mut out = Vec::with_capacity(4 + HEADER_LEN + frame.body.len());
    out.extend_from_slice(&frame.length().to_be_bytes());
    out.extend_from_slice(&frame.session_id.to_be_bytes());
    out.push(frame.header_byte2);
    out.push(frame.header_byte3);
    out.push(frame.p_type);
    out.push(frame.s_type);
    out.extend_from_slice(&frame.system_bytes.to_be_bytes());
    out.extend_from_slice(&frame.body);
    Ok(out)
}

#[derive(Debug, PartialEq, Eq)]
pub enum Decoded {
    Frame { frame: HsmsFrame, consumed: usize },
    NeedMoreBytes,
}

/// Incremental decode from the front of `buf`. Nothing is consumed unless a
/// whole frame is present. Unknown s_type/p_type values are returned as-is so
/// the connection layer can reject them.
pub fn decode_frame(buf: &[u8], max_len: usize) -> Result<Decoded, FrameError> {
    if buf.len() < 4 {
        return Ok(Decoded::NeedMoreBytes);
    }
    let length = u32::from_be_bytes(buf[..4].try_into().unwrap()) as usize;
    if length > max_len {
        return Err(FrameError::FrameTooLarge { length, max: max_len });
    }
    if length < HEADER_LEN {
        return Err(FrameError::FrameTooShort(length));
    }
    if buf.len() < 4 + length {
        return Ok(Decoded::NeedMoreBytes);
    }
    let h = &buf[4..4 + HEADER_LEN];
    let frame = HsmsFrame {
        session_id: u16::from_be_bytes([h[0], h[1]]),
        header_byte2: h[2],
        header_byte3: h[3],
        p_type: h[4],
        s_type: h[5],
        system_bytes: u32::from_be_bytes([h[6], h[7], h[8], h[9]]),
        body: buf[4 + HEADER_LEN..4 + length].to_vec(),
    };
    Ok(Decoded::Frame {
        frame,
        consumed: 4 + length,
    })
}
