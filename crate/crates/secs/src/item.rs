//! SECS-II data items and their binary encoding.
//!
//! Every item is a format byte (six bits of format code, two bits giving the
//! number of length bytes), one to three big-endian length bytes, then the
//! payload. For lists the length counts child items, for everything else it
//! counts payload bytes.

use thiserror::Error;

/// Largest length representable with three length bytes.
pub const MAX_ITEM_LENGTH: usize = (1 << 24) - 1;

/// Default maximum list nesting accepted by [`decode_item`].
pub const DEFAULT_MAX_DEPTH: usize = 32;

/// Format codes, as six-bit values (conventionally written in octal).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FormatCode {
    List = 0o00,
    Binary = 0o10,
    Boolean = 0o11,
    Ascii = 0o20,
    I8 = 0o30,
    I1 = 0o31,
    I2 = 0o32,
    I4 = 0o34,
    F8 = 0o40,
    F4 = 0o44,
    U8 = 0o50,
    U1 = 0o51,
    U2 = 0o52,
    U4 = 0o54,
}

impl FormatCode {
    pub fn from_code(code: u8) -> Option<Self> {
        use FormatCode::*;
        Some(match code {
            0o00 => List,
            0o10 => Binary,
            0o11 => Boolean,
            0o20 => Ascii,
            0o30 => I8,
            0o31 => I1,
            0o32 => I2,
            0o34 => I4,
            0o40 => F8,
            0o44 => F4,
            0o50 => U8,
            0o51 => U1,
            0o52 => U2,
            0o54 => U4,
            _ => return None,
        })
    }

    /// Bytes per element; lists report 0.
    pub fn element_width(self) -> usize {
        use FormatCode::*;
        match self {
            List => 0,
            Binary | Boolean | Ascii | I1 | U1 => 1,
            I2 | U2 => 2,
            I4 | U4 | F4 => 4,
            I8 | U8 | F8 => 8,
        }
    }

    /// SML mnemonic.
    pub fn mnemonic(self) -> &'static str {
        use FormatCode::*;
        match self {
            List => "L",
            Binary => "B",
            Boolean => "BOOLEAN",
            Ascii => "A",
            I8 => "I8",
            I1 => "I1",
            I2 => "I2",
            I4 => "I4",
            F8 => "F8",
            F4 => "F4",
            U8 => "U8",
            U1 => "U1",
            U2 => "U2",
            U4 => "U4",
        }
    }
}

/// A SECS-II item tree.
#[derive(Clone, Debug, PartialEq)]
pub enum SecsItem {
    List(Vec<SecsItem>),
    /// Raw single-byte text; no character-set interpretation.
    Ascii(Vec<u8>),
    Binary(Vec<u8>),
    Boolean(Vec<bool>),
    U1(Vec<u8>),
    U2(Vec<u16>),
    U4(Vec<u32>),
    U8(Vec<u64>),
    I1(Vec<i8>),
    I2(Vec<i16>),
    I4(Vec<i32>),
    I8(Vec<i64>),
    F4(Vec<f32>),
    F8(Vec<f64>),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncodeError {
    #[error("item length {0} does not fit in three length bytes")]
    OversizeItem(usize),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("input is empty")]
    Empty,
    #[error("truncated item: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("unknown format code {code:#o} at offset {offset}")]
    UnknownFormatCode { code: u8, offset: usize },
    #[error("format byte at offset {offset} declares zero length bytes")]
    ZeroLengthBytes { offset: usize },
    #[error("payload of {length} bytes is not a multiple of the {width}-byte element width")]
    MisalignedPayload { length: usize, width: usize },
    #[error("list nesting exceeds maximum depth {max}")]
    DepthExceeded { max: usize },
}

impl SecsItem {
    pub fn ascii(text: impl AsRef<str>) -> Self {
        SecsItem::Ascii(text.as_ref().as_bytes().to_vec())
    }

    pub fn u4(value: u32) -> Self {
        SecsItem::U4(vec![value])
    }

    pub fn f8(value: f64) -> Self {
        SecsItem::F8(vec![value])
    }

    pub fn format_code(&self) -> FormatCode {
        match self {
            SecsItem::List(_) => FormatCode::List,
            SecsItem::Ascii(_) => FormatCode::Ascii,
            SecsItem::Binary(_) => FormatCode::Binary,
            SecsItem::Boolean(_) => FormatCode::Boolean,
            SecsItem::U1(_) => FormatCode::U1,
            SecsItem::U2(_) => FormatCode::U2,
            SecsItem::U4(_) => FormatCode::U4,
            SecsItem::U8(_) => FormatCode::U8,
            SecsItem::I1(_) => FormatCode::I1,
            SecsItem::I2(_) => FormatCode::I2,
            SecsItem::I4(_) => FormatCode::I4,
            SecsItem::I8(_) => FormatCode::I8,
            SecsItem::F4(_) => FormatCode::F4,
            SecsItem::F8(_) => FormatCode::F8,
        }
    }

    /// Number of elements (children for lists).
    pub fn len(&self) -> usize {
        match self {
            SecsItem::List(v) => v.len(),
            SecsItem::Ascii(v) | SecsItem::Binary(v) | SecsItem::U1(v) => v.len(),
            SecsItem::Boolean(v) => v.len(),
            SecsItem::U2(v) => v.len(),
            SecsItem::U4(v) => v.len(),
            SecsItem::U8(v) => v.len(),
            SecsItem::I1(v) => v.len(),
            SecsItem::I2(v) => v.len(),
            SecsItem::I4(v) => v.len(),
            SecsItem::I8(v) => v.len(),
            SecsItem::F4(v) => v.len(),
            SecsItem::F8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Value of the length field: child count for lists, byte count otherwise.
    pub fn length_field(&self) -> usize {
        self.len() * self.format_code().element_width().max(1)
    }

    /// Nesting depth; a leaf has depth 0, a list of leaves depth 1.
    pub fn depth(&self) -> usize {
        match self {
            SecsItem::List(children) => 1 + children.iter().map(|c| c.depth()).max().unwrap_or(0),
            _ => 0,
        }
    }

    pub fn as_list(&self) -> Option<&[SecsItem]> {
        match self {
            SecsItem::List(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_ascii(&self) -> Option<String> {
        match self {
            SecsItem::Ascii(v) => Some(v.iter().map(|&b| b as char).collect()),
            _ => None,
        }
    }

    /// First element of any unsigned or non-negative signed integer item.
    pub fn first_u64(&self) -> Option<u64> {
        match self {
            SecsItem::U1(v) => v.first().map(|&x| x as u64),
            SecsItem::U2(v) => v.first().map(|&x| x as u64),
            SecsItem::U4(v) => v.first().map(|&x| x as u64),
            SecsItem::U8(v) => v.first().copied(),
            SecsItem::I1(v) => v.first().and_then(|&x| u64::try_from(x).ok()),
            SecsItem::I2(v) => v.first().and_then(|&x| u64::try_from(x).ok()),
            SecsItem::I4(v) => v.first().and_then(|&x| u64::try_from(x).ok()),
            SecsItem::I8(v) => v.first().and_then(|&x| u64::try_from(x).ok()),
            _ => None,
        }
    }

    /// Elements of a numeric item widened to f64.
    pub fn numbers(&self) -> Option<Vec<f64>> {
        Some(match self {
            SecsItem::U1(v) => v.iter().map(|&x| x as f64).collect(),
            SecsItem::U2(v) => v.iter().map(|&x| x as f64).collect(),
            SecsItem::U4(v) => v.iter().map(|&x| x as f64).collect(),
            SecsItem::U8(v) => v.iter().map(|&x| x as f64).collect(),
            SecsItem::I1(v) => v.iter().map(|&x| x as f64).collect(),
            SecsItem::I2(v) => v.iter().map(|&x| x as f64).collect(),
            SecsItem::I4(v) => v.iter().map(|&x| x as f64).collect(),
            SecsItem::I8(v) => v.iter().map(|&x| x as f64).collect(),
            SecsItem::F4(v) => v.iter().map(|&x| x as f64).collect(),
            SecsItem::F8(v) => v.clone(),
            _ => return None,
        })
    }
}

fn length_byte_count(length: usize) -> Result<u8, EncodeError> {
    match length {
        0..=0xFF => Ok(1),
        0x100..=0xFFFF => Ok(2),
        0x1_0000..=MAX_ITEM_LENGTH => Ok(3),
        _ => Err(EncodeError::OversizeItem(length)),
    }
}

fn write_header(out: &mut Vec<u8>, code: FormatCode, length: usize) -> Result<(), EncodeError> {
    let n = length_byte_count(length)?;
    out.push(((code as u8) << 2) | n);
    let be = (length as u32).to_be_bytes();
    out.extend_from_slice(&be[4 - n as usize..]);
    Ok(())
}

/// Encode an item into a fresh buffer.
pub fn encode_item(item: &SecsItem) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::new();
    encode_item_into(item, &mut out)?;
    Ok(out)
}

/// Append the encoding of `item` to `out`. On error `out` may hold a partial
/// encoding.
pub fn encode_item_into(item: &SecsItem, out: &mut Vec<u8>) -> Result<(), EncodeError> {
    write_header(out, item.format_code(), item.length_field())?;
    macro_rules! be {
        ($v:expr) => {
            for x in $v {
                out.extend_from_slice(&x.to_be_bytes());
            }
        };
    }
    match item {
        SecsItem::List(children) => {
            for child in children {
                encode_item_into(child, out)?;
            }
        }
        SecsItem::Ascii(v) | SecsItem::Binary(v) | SecsItem::U1(v) => out.extend_from_slice(v),
        SecsItem::Boolean(v) => out.extend(v.iter().map(|&b| b as u8)),
        SecsItem::U2(v) => be!(v),
        SecsItem::U4(v) => be!(v),
        SecsItem::U8(v) => be!(v),
        SecsItem::I1(v) => be!(v),
        SecsItem::I2(v) => be!(v),
        SecsItem::I4(v) => be!(v),
        SecsItem::I8(v) => be!(v),
        SecsItem::F4(v) => be!(v),
        SecsItem::F8(v) => be!(v),
    }
    Ok(())
}

/// Decode one item from the front of `bytes`, returning it and the number of
/// bytes consumed. Trailing bytes are left for the caller.
pub fn decode_item(bytes: &[u8]) -> Result<(SecsItem, usize), DecodeError> {
    decode_item_with_depth(bytes, DEFAULT_MAX_DEPTH)
}

pub fn decode_item_with_depth(bytes: &[u8], max_depth: usize) -> Result<(SecsItem, usize), DecodeError> {
    if bytes.is_empty() {
        return Err(DecodeError::Empty);
    }
    let mut cursor = Cursor { bytes, pos: 0 };
    let item = cursor.item(0, max_depth)?;
    Ok((item, cursor.pos))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(DecodeError::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn item(&mut self, depth: usize, max_depth: usize) -> Result<SecsItem, DecodeError> {
        let offset = self.pos;
        let format_byte = self.take(1)?[0];
        let code = format_byte >> 2;
        let n_len = (format_byte & 0b11) as usize;
        let format = FormatCode::from_code(code).ok_or(DecodeError::UnknownFormatCode { code, offset })?;
        if n_len == 0 {
            return Err(DecodeError::ZeroLengthBytes { offset });
        }
        let length = self.take(n_len)?.iter().fold(0usize, |acc, &b| (acc << 8) | b as usize);

        if format == FormatCode::List {
            if depth >= max_depth {
                return Err(DecodeError::DepthExceeded { max: max_depth });
            }
            // Every child needs at least two bytes, so a count larger than
            // that is truncated before we allocate for it.
            let remaining = self.bytes.len() - self.pos;
            if length > remaining / 2 {
                return Err(DecodeError::Truncated {
                    offset: self.pos,
                    needed: length * 2,
                    available: remaining,
                });
            }
            let mut children = Vec::with_capacity(length);
            for _ in 0..length {
                children.push(self.item(depth + 1, max_depth)?);
            }
            return Ok(SecsItem::List(children));
        }

        let width = format.element_width();
        if length % width != 0 {
            return Err(DecodeError::MisalignedPayload { length, width });
        }
        let payload = self.take(length)?;
        macro_rules! be {
            ($t:ty, $variant:ident) => {
                SecsItem::$variant(
                    payload
                        .chunks_exact(width)
                        .map(|c| <$t>::from_be_bytes(c.try_into().expect("chunk width")))
                        .collect(),
                )
            };
        }
        Ok(match format {
            FormatCode::List => unreachable!(),
            FormatCode::Ascii => SecsItem::Ascii(payload.to_vec()),
            FormatCode::Binary => SecsItem::Binary(payload.to_vec()),
            FormatCode::U1 => SecsItem::U1(payload.to_vec()),
            FormatCode::Boolean => SecsItem::Boolean(payload.iter().map(|&b| b != 0).collect()),
            FormatCode::U2 => be!(u16, U2),
            FormatCode::U4 => be!(u32, U4),
            FormatCode::U8 => be!(u64, U8),
            FormatCode::I1 => be!(i8, I1),
            FormatCode::I2 => be!(i16, I2),
            FormatCode::I4 => be!(i32, I4),
            FormatCode::I8 => be!(i64, I8),
            FormatCode::F4 => be!(f32, F4),
            FormatCode::F8 => be!(f64, F8),
        })
    }
}
