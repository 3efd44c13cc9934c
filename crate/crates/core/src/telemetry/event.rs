//! Equipment telemetry events and their SECS-II message forms.
//!
//! S6F11 body: `L[U4 DATAID, U4 CEID, L[reports]]`, each report
//! `L[U4 RPTID, L[F8 ...]]`. Process values travel in report 1, in channel
//! order, and the equipment clock (epoch milliseconds) in report 2. A state
//! transition is CEID 900 with report 9 holding `[from, to]` state codes.
//!
//! S5F1 body: `L[B ALCD, U4 ALID, A ALTX]`; bit 8 of ALCD marks a set alarm.

use std::fmt;
use std::str::FromStr;

use fa_secs::{SecsItem, SecsMessage};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const RPTID_PV: u32 = 1;
pub const RPTID_CLOCK: u32 = 2;
pub const RPTID_STATE: u32 = 9;
pub const CEID_STATE_CHANGE: u32 = 900;
/// GEM alarm category "parameter control error".
pub const ALARM_CATEGORY: u8 = 4;
const ALCD_SET: u8 = 0x80;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquipmentState {
    #[default]
    Idle,
    Processing,
    Alarmed,
}

impl EquipmentState {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::Idle),
            1 => Some(Self::Processing),
            2 => Some(Self::Alarmed),
            _ => None,
        }
    }
}

impl fmt::Display for EquipmentState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Idle => "idle",
            Self::Processing => "processing",
            Self::Alarmed => "alarmed",
        })
    }
}

impl FromStr for EquipmentState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "idle" => Ok(Self::Idle),
            "processing" => Ok(Self::Processing),
            "alarmed" => Ok(Self::Alarmed),
            other => Err(format!("unknown equipment state {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    Alarm {
        alarm_id: u32,
        set: bool,
        text: String,
    },
    EventReport {
        ceid: u32,
        pv_values: IndexMap<String, f64>,
    },
    StateTransition {
        from: EquipmentState,
        to: EquipmentState,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelemetryEvent {
    pub timestamp_ms: i64,
    pub equipment_id: String,
    pub kind: EventKind,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConvertError {
    #[error("S{stream}F{function} is not a telemetry message")]
    NotTelemetry { stream: u8, function: u8 },
    #[error("malformed body: {0}")]
    Malformed(&'static str),
    #[error("report carries {got} values for {expected} channels")]
    ChannelCount { expected: usize, got: usize },
}

fn report(rptid: u32, values: Vec<f64>) -> SecsItem {
    SecsItem::List(vec![SecsItem::u4(rptid), SecsItem::List(vec![SecsItem::F8(values)])])
}

impl TelemetryEvent {
    /// The primary message (W bit set) carrying this event.
    pub fn to_message(&self, dataid: u32) -> SecsMessage {
        let clock = report(RPTID_CLOCK, vec![self.timestamp_ms as f64]);
        let (stream, function, body) = match &self.kind {
            EventKind::Alarm { alarm_id, set, text } => {
                let alcd = if *set {
                    ALCD_SET | ALARM_CATEGORY
                } else {
                    ALARM_CATEGORY
                };
                let body = SecsItem::List(vec![
                    SecsItem::Binary(vec![alcd]),
                    SecsItem::u4(*alarm_id),
                    SecsItem::ascii(text),
                ]);
                (5, 1, body)
            }
            EventKind::EventReport { ceid, pv_values } => {
                let pv = report(RPTID_PV, pv_values.values().copied().collect());
                let body = SecsItem::List(vec![
                    SecsItem::u4(dataid),
                    SecsItem::u4(*ceid),
                    SecsItem::List(vec![pv, clock]),
                ]);
                (6, 11, body)
            }
            EventKind::StateTransition { from, to } => {
                let st = report(RPTID_STATE, vec![from.code() as f64, to.code() as f64]);
                let body = SecsItem::List(vec![
                    SecsItem::u4(dataid),
                    SecsItem::u4(CEID_STATE_CHANGE),
                    SecsItem::List(vec![st, clock]),
                ]);
                (6, 11, body)
            }
        };
        SecsMessage::primary(stream, function, true, Some(body)).expect("odd function")
    }

    /// Rebuild an event from S6F11 or S5F1. Report values are matched to
    /// `channels` by position; alarms, which carry no clock, get `alarm_time_ms`.
    pub fn from_message(
        msg: &SecsMessage,
        equipment_id: &str,
        channels: &[String],
        alarm_time_ms: i64,
    ) -> Result<Self, ConvertError> {
        let body = msg
            .body
            .as_ref()
            .and_then(SecsItem::as_list)
            .ok_or(ConvertError::Malformed("body is not a list"))?;
        let kind;
        let mut timestamp_ms = alarm_time_ms;
        match (msg.stream, msg.function) {
            (5, 1) => {
                let [alcd, alid, altx] = body else {
                    return Err(ConvertError::Malformed("S5F1 needs three items"));
                };
                let alcd = match alcd {
                    SecsItem::Binary(b) if b.len() == 1 => b[0],
                    _ => return Err(ConvertError::Malformed("ALCD must be one binary byte")),
                };
                kind = EventKind::Alarm {
                    alarm_id: alid
                        .first_u64()
                        .ok_or(ConvertError::Malformed("ALID must be an integer"))?
                        as u32,
                    set: alcd & ALCD_SET != 0,
                    text: altx.as_ascii().ok_or(ConvertError::Malformed("ALTX must be ASCII"))?,
                };
            }
            (6, 11) => {
                let [_dataid, ceid, reports] = body else {
                    return Err(ConvertError::Malformed("S6F11 needs three items"));
                };
                let ceid = ceid
                    .first_u64()
                    .ok_or(ConvertError::Malformed("CEID must be an integer"))? as u32;
                let mut values: IndexMap<u32, Vec<f64>> = IndexMap::new();
                for r in reports
                    .as_list()
                    .ok_or(ConvertError::Malformed("reports must be a list"))?
                {
                    let [rptid, vals] = r.as_list().ok_or(ConvertError::Malformed("report must be a list"))? else {
                        return Err(ConvertError::Malformed("report needs two items"));
                    };
                    let rptid = rptid
                        .first_u64()
                        .ok_or(ConvertError::Malformed("RPTID must be an integer"))?
                        as u32;
                    let mut nums = Vec::new();
                    for v in vals.as_list().ok_or(ConvertError::Malformed("values must be a list"))? {
                        nums.extend(v.numbers().ok_or(ConvertError::Malformed("values must be numeric"))?);
                    }
                    values.insert(rptid, nums);
                }
                if let Some(clock) = values.get(&RPTID_CLOCK).and_then(|v| v.first()) {
                    timestamp_ms = *clock as i64;
                }
                if ceid == CEID_STATE_CHANGE {
                    let st = values
                        .get(&RPTID_STATE)
                        .ok_or(ConvertError::Malformed("state report missing"))?;
                    let code = |i: usize| {
                        st.get(i)
                            .and_then(|c| EquipmentState::from_code(*c as u8))
                            .ok_or(ConvertError::Malformed("bad state code"))
                    };
                    kind = EventKind::StateTransition {
                        from: code(0)?,
                        to: code(1)?,
                    };
                } else {
                    let pv = values.get(&RPTID_PV).cloned().unwrap_or_default();
                    if pv.len() != channels.len() {
                        return Err(ConvertError::ChannelCount {
                            expected: channels.len(),
                            got: pv.len(),
                        });
                    }
                    kind = EventKind::EventReport {
                        ceid,
                        pv_values: channels.iter().cloned().zip(pv).collect(),
                    };
                }
            }
            (stream, function) => return Err(ConvertError::NotTelemetry { stream, function }),
        }
        Ok(TelemetryEvent {
            timestamp_ms,
            equipment_id: equipment_id.to_string(),
            kind,
        })
    }

    /// Storage form: `L[I8 ts, A equipment, U1 kind, ...]`.
    pub fn to_record(&self) -> SecsItem {
        let mut items = vec![
            SecsItem::I8(vec![self.timestamp_ms]),
            SecsItem::ascii(&self.equipment_id),
        ];
        match &self.kind {
            EventKind::Alarm { alarm_id, set, text } => items.extend([
                SecsItem::U1(vec![0]),
                SecsItem::u4(*alarm_id),
                SecsItem::Boolean(vec![*set]),
                SecsItem::ascii(text),
            ]),
            EventKind::EventReport { ceid, pv_values } => items.extend([
                SecsItem::U1(vec![1]),
                SecsItem::u4(*ceid),
                SecsItem::List(
                    pv_values
                        .iter()
                        .map(|(k, v)| SecsItem::List(vec![SecsItem::ascii(k), SecsItem::f8(*v)]))
                        .collect(),
                ),
            ]),
            EventKind::StateTransition { from, to } => items.extend([
                SecsItem::U1(vec![2]),
                SecsItem::U1(vec![from.code()]),
                SecsItem::U1(vec![to.code()]),
            ]),
        }
        SecsItem::List(items)
    }

    pub fn from_record(item: &SecsItem) -> Option<Self> {
        let items = item.as_list()?;
        let timestamp_ms = match items.first()? {
            SecsItem::I8(v) if v.len() == 1 => v[0],
            _ => return None,
        };
        let equipment_id = items.get(1)?.as_ascii()?;
        let tag = items.get(2)?.first_u64()?;
        let kind = match (tag, &items[3..]) {
            (0, [alid, SecsItem::Boolean(set), text]) if set.len() == 1 => EventKind::Alarm {
                alarm_id: alid.first_u64()? as u32,
                set: set[0],
                text: text.as_ascii()?,
            },
            (1, [ceid, SecsItem::List(pvs)]) => {
                let mut pv_values = IndexMap::new();
                for pv in pvs {
                    let [name, value] = pv.as_list()? else { return None };
                    let SecsItem::F8(v) = value else { return None };
                    pv_values.insert(name.as_ascii()?, *v.first()?);
                }
                EventKind::EventReport {
                    ceid: ceid.first_u64()? as u32,
                    pv_values,
                }
            }
            (2, [from, to]) => EventKind::StateTransition {
                from: EquipmentState::from_code(from.first_u64()? as u8)?,
                to: EquipmentState::from_code(to.first_u64()? as u8)?,
            },
            _ => return None,
        };
        Some(TelemetryEvent {
            timestamp_ms,
            equipment_id,
            kind,
        })
    }

    /// Process values of a report event, if this is one.
    pub fn pv_values(&self) -> Option<&IndexMap<String, f64>> {
        match &self.kind {
            EventKind::EventReport { pv_values, .. } => Some(pv_values),
            _ => None,
        }
    }
}
