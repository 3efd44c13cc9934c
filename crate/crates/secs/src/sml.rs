//! Canonical SML text rendering.
//!
//! Grammar used throughout this repo:
//!
//! ```text
//! message := header ( "\n" item )?
//! header  := "S" stream "F" function ( " W" )?
//! list    := "<L [" n "]" ( "\n" item-indented )* "\n" ">"     (n > 0)
//!          | "<L [0]>"
//! leaf    := "<" mnemonic ( " " value )* ">"
//! ```
//!
//! Indentation is two spaces per nesting level, one item per line. ASCII is
//! quoted with `\"`, `\\` and `\xHH` escapes for bytes outside 0x20..=0x7E.
//! Binary is rendered as `0xHH`, booleans as `TRUE`/`FALSE`, floats with the
//! shortest representation that round-trips.

use std::fmt::Write;

use crate::item::SecsItem;
use crate::message::SecsMessage;

pub fn render_sml(msg: &SecsMessage) -> String {
    let mut out = msg.header();
    if let Some(body) = &msg.body {
        out.push('\n');
        render_item_into(body, 0, &mut out);
    }
    out
}

pub fn render_item(item: &SecsItem) -> String {
    let mut out = String::new();
    render_item_into(item, 0, &mut out);
    out
}

fn indent(level: usize, out: &mut String) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn render_item_into(item: &SecsItem, level: usize, out: &mut String) {
    indent(level, out);
    let mnemonic = item.format_code().mnemonic();
    match item {
        SecsItem::List(children) => {
            write!(out, "<L [{}]", children.len()).unwrap();
            if children.is_empty() {
                out.push('>');
                return;
            }
            for child in children {
                out.push('\n');
                render_item_into(child, level + 1, out);
            }
            out.push('\n');
            indent(level, out);
            out.push('>');
        }
        SecsItem::Ascii(bytes) => {
            out.push_str("<A \"");
            for &b in bytes {
                match b {
                    b'"' => out.push_str("\\\""),
                    b'\\' => out.push_str("\\\\"),
                    0x20..=0x7E => out.push(b as char),
                    _ => write!(out, "\\x{b:02X}").unwrap(),
                }
            }
            out.push_str("\">");
        }
        _ => {
            out.push('<');
            out.push_str(mnemonic);
            let values: Vec<String> = match item {
                SecsItem::Binary(v) => v.iter().map(|b| format!("0x{b:02X}")).collect(),
                SecsItem::Boolean(v) => v
                    .iter()
                    .map(|&b| if b { "TRUE" } else { "FALSE" }.to_string())
                    .collect(),
                SecsItem::U1(v) => v.iter().map(|x| x.to_string()).collect(),
                SecsItem::U2(v) => v.iter().map(|x| x.to_string()).collect(),
                SecsItem::U4(v) => v.iter().map(|x| x.to_string()).collect(),
                SecsItem::U8(v) => v.iter().map(|x| x.to_string()).collect(),
                SecsItem::I1(v) => v.iter().map(|x| x.to_string()).collect(),
                SecsItem::I2(v) => v.iter().map(|x| x.to_string()).collect(),
                SecsItem::I4(v) => v.iter().map(|x| x.to_string()).collect(),
                SecsItem::I8(v) => v.iter().map(|x| x.to_string()).collect(),
                SecsItem::F4(v) => v.iter().map(|x| format!("{x:?}")).collect(),
                SecsItem::F8(v) => v.iter().map(|x| format!("{x:?}")).collect(),
                SecsItem::List(_) | SecsItem::Ascii(_) => unreachable!(),
            };
            for v in values {
                out.push(' ');
                out.push_str(&v);
            }
            out.push('>');
        }
    }
}
