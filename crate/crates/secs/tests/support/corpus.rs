//! Reference corpus of frames produced by an independent codec (secsgem).
//! Regenerate with `fixtures/gen_reference_corpus.py`.
#![allow(dead_code)]

use fa_secs::hsms::{decode_frame, encode_frame, Decoded, HsmsFrame, SType};
use fa_secs::{decode_item, encode_item, SecsItem, SecsMessage};
use serde_json::Value;

pub fn corpus() -> Value {
    serde_json::from_str(include_str!("../fixtures/reference_corpus.json")).unwrap()
}

pub fn item_from_json(node: &Value) -> SecsItem {
    let kind = node["type"].as_str().unwrap();
    let value = &node["value"];
    let nums = || value.as_array().unwrap().iter();
    match kind {
        "L" => SecsItem::List(nums().map(item_from_json).collect()),
        "A" => SecsItem::Ascii(value.as_str().unwrap().as_bytes().to_vec()),
        "B" => SecsItem::Binary(nums().map(|v| v.as_u64().unwrap() as u8).collect()),
        "BOOLEAN" => SecsItem::Boolean(nums().map(|v| v.as_bool().unwrap()).collect()),
        "U1" => SecsItem::U1(nums().map(|v| v.as_u64().unwrap() as u8).collect()),
        "U2" => SecsItem::U2(nums().map(|v| v.as_u64().unwrap() as u16).collect()),
        "U4" => SecsItem::U4(nums().map(|v| v.as_u64().unwrap() as u32).collect()),
        "U8" => SecsItem::U8(nums().map(|v| v.as_u64().unwrap()).collect()),
        "I1" => SecsItem::I1(nums().map(|v| v.as_i64().unwrap() as i8).collect()),
        "I2" => SecsItem::I2(nums().map(|v| v.as_i64().unwrap() as i16).collect()),
        "I4" => SecsItem::I4(nums().map(|v| v.as_i64().unwrap() as i32).collect()),
        "I8" => SecsItem::I8(nums().map(|v| v.as_i64().unwrap()).collect()),
        "F4" => SecsItem::F4(nums().map(|v| v.as_f64().unwrap() as f32).collect()),
        "F8" => SecsItem::F8(nums().map(|v| v.as_f64().unwrap()).collect()),
        other => panic!("unknown item type {other}"),
    }
}

/// Coverage requirement: at least 50 data messages including S5F1 and S6F11.
pub fn check_coverage() -> Result<usize, String> {
    let c = corpus();
    let messages = c["messages"].as_array().ok_or("no messages")?;
    if messages.len() < 50 {
        return Err(format!("only {} messages", messages.len()));
    }
    let has = |s: u64, f: u64| {
        messages
            .iter()
            .any(|m| m["stream"].as_u64() == Some(s) && m["function"].as_u64() == Some(f))
    };
    for (s, f) in [(5, 1), (6, 11)] {
        if !has(s, f) {
            return Err(format!("no S{s}F{f} in corpus"));
        }
    }
    Ok(messages.len())
}

/// Encode every data message and compare body and frame bytes; decode the
/// reference bytes back. Returns the number of messages checked.
pub fn check_data_messages() -> Result<usize, String> {
    let c = corpus();
    let messages = c["messages"].as_array().ok_or("no messages")?;
    for m in messages {
        let name = m["name"].as_str().unwrap();
        let body = match &m["body"] {
            Value::Null => None,
            node => Some(item_from_json(node)),
        };
        let msg = SecsMessage::raw(
            m["stream"].as_u64().unwrap() as u8,
            m["function"].as_u64().unwrap() as u8,
            m["wait_bit"].as_bool().unwrap(),
            body.clone(),
        );
        let expected_body = hex::decode(m["body_hex"].as_str().unwrap()).unwrap();
        if let Some(item) = &body {
            let encoded = encode_item(item).map_err(|e| format!("{name}: {e}"))?;
            if encoded != expected_body {
                return Err(format!("{name}: body bytes differ"));
            }
            let (decoded, used) = decode_item(&expected_body).map_err(|e| format!("{name}: {e}"))?;
            if &decoded != item || used != expected_body.len() {
                return Err(format!("{name}: decode mismatch"));
            }
        }
        let sb = m["system_bytes"].as_u64().unwrap() as u32;
        let session = m["session_id"].as_u64().unwrap() as u16;
        let frame = HsmsFrame::data(session, &msg, sb).map_err(|e| format!("{name}: {e}"))?;
        let expected_frame = hex::decode(m["frame_hex"].as_str().unwrap()).unwrap();
        if encode_frame(&frame).map_err(|e| format!("{name}: {e}"))? != expected_frame {
            return Err(format!("{name}: frame bytes differ"));
        }
        match decode_frame(&expected_frame, usize::MAX).map_err(|e| format!("{name}: {e}"))? {
            Decoded::Frame { frame: f, consumed } => {
                if consumed != expected_frame.len() || f.to_message().ok().as_ref() != Some(&msg) {
                    return Err(format!("{name}: frame decode mismatch"));
                }
            }
            Decoded::NeedMoreBytes => return Err(format!("{name}: incomplete")),
        }
    }
    Ok(messages.len())
}

/// Compare every control frame. Returns the number checked.
pub fn check_control_frames() -> Result<usize, String> {
    let c = corpus();
    let entries = c["control"].as_array().ok_or("no control frames")?;
    for entry in entries {
        let name = entry["name"].as_str().unwrap();
        let expected = hex::decode(entry["frame_hex"].as_str().unwrap()).unwrap();
        let sb = entry["system_bytes"].as_u64().unwrap() as u32;
        let stype = SType::from_byte(entry["s_type"].as_u64().unwrap() as u8)
            .ok_or_else(|| format!("{name}: unknown s_type"))?;
        let frame = match stype {
            SType::SelectReq => HsmsFrame::select_req(sb),
            SType::SelectRsp => HsmsFrame::select_rsp(sb, 0),
            SType::DeselectRsp => HsmsFrame::deselect_rsp(sb, 0),
            SType::LinktestReq => HsmsFrame::linktest_req(sb),
            SType::LinktestRsp => HsmsFrame::linktest_rsp(sb),
            SType::SeparateReq => HsmsFrame::separate_req(sb),
            SType::RejectReq => {
                // rebuild the rejected frame from the reference header
                let mut rejected = HsmsFrame::select_req(sb);
                rejected.s_type = expected[6];
                HsmsFrame::reject_req(&rejected, expected[7])
            }
            other => HsmsFrame::control(other, 0xFFFF, sb),
        };
        if encode_frame(&frame).map_err(|e| format!("{name}: {e}"))? != expected {
            return Err(format!("{name}: control frame bytes differ"));
        }
    }
    Ok(entries.len())
}
