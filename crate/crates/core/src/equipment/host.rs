use std::net::ToSocketAddrs;
use std::time::{Duration, Instant};

use fa_secs::hsms::{HsmsSession, Role, SessionConfig, SessionError, SessionEvent};
use fa_secs::{SecsItem, SecsMessage};
use thiserror::Error;
use tracing::warn;

use crate::telemetry::{EventKind, StoreError, TelemetryEvent, TelemetryLog};

#[derive(Debug, Error)]
pub enum CollectError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("unexpected reply to {request}: {detail}")]
    BadReply { request: &'static str, detail: String },
}

#[derive(Clone, Debug)]
pub struct CollectOptions {
    /// Wall-clock budget after selection.
    pub duration: Duration,
    /// Stop early once this many event reports arrived.
    pub max_reports: Option<u64>,
    pub session: SessionConfig,
}

impl Default for CollectOptions {
    fn default() -> Self {
        CollectOptions {
            duration: Duration::from_secs(10),
            max_reports: None,
            session: SessionConfig::new(Role::Active),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct CollectSummary {
    pub equipment_id: String,
    pub channels: Vec<String>,
    pub reports: u64,
    pub alarms: u64,
    pub transitions: u64,
    pub linktest_rtt: Option<Duration>,
    pub events: Vec<TelemetryEvent>,
}

fn bad(request: &'static str, detail: impl Into<String>) -> CollectError {
    CollectError::BadReply {
        request,
        detail: detail.into(),
    }
}

fn establish(session: &HsmsSession) -> Result<(String, Vec<String>), CollectError> {
    let s1f13 = SecsMessage::primary(1, 13, true, Some(SecsItem::List(vec![]))).expect("valid primary");
    let r = session.request(s1f13)?;
    let mdln = r
        .body
        .as_ref()
        .and_then(SecsItem::as_list)
        .and_then(|l| l.get(1))
        .and_then(SecsItem::as_list)
        .and_then(|l| l.first())
        .and_then(SecsItem::as_ascii)
        .ok_or_else(|| bad("S1F13", r.header()))?;

    let s1f11 = SecsMessage::primary(1, 11, true, Some(SecsItem::List(vec![]))).expect("valid primary");
    let r = session.request(s1f11)?;
    let rows = r
        .body
        .as_ref()
        .and_then(SecsItem::as_list)
        .ok_or_else(|| bad("S1F11", r.header()))?;
    let channels = rows
        .iter()
        .map(|row| {
            row.as_list()
                .and_then(|l| l.get(1))
                .and_then(SecsItem::as_ascii)
                .ok_or_else(|| bad("S1F11", "namelist row"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((mdln.trim().to_string(), channels))
}

/// Connect to an equipment endpoint, learn its identity and channel names,
/// then acknowledge and record incoming reports and alarms.
pub fn collect(
    addr: impl ToSocketAddrs,
    log: Option<&TelemetryLog>,
    opts: &CollectOptions,
) -> Result<CollectSummary, CollectError> {
    let session = HsmsSession::connect(addr, opts.session.clone())?;
    let out = run(&session, log, opts);
    session.close();
    out
}

fn run(
    session: &HsmsSession,
    log: Option<&TelemetryLog>,
    opts: &CollectOptions,
) -> Result<CollectSummary, CollectError> {
    session.wait_selected(opts.session.connection.timeouts.t6)?;
    let (equipment_id, channels) = establish(session)?;
    let mut summary = CollectSummary {
        linktest_rtt: Some(session.linktest()?),
        equipment_id,
        channels,
        ..Default::default()
    };
    let deadline = Instant::now() + opts.duration;
    let mut clock_ms = 0i64;
    while let Some(left) = deadline.checked_duration_since(Instant::now()) {
        if opts.max_reports.is_some_and(|m| summary.reports >= m) {
            break;
        }
        let Some(event) = session.recv_event(left.min(Duration::from_millis(200))) else {
            continue;
        };
        let (system_bytes, message) = match event {
            SessionEvent::Message { system_bytes, message } if message.is_primary() => (system_bytes, message),
            SessionEvent::Closed | SessionEvent::Deselected => break,
            _ => continue,
        };
        let ack = match (message.stream, message.function) {
            (6, 11) => Some(SecsMessage::reply(6, 12, Some(SecsItem::Binary(vec![0])))),
            (5, 1) => Some(SecsMessage::reply(5, 2, Some(SecsItem::Binary(vec![0])))),
            _ => None,
        };
        match ack {
            Some(reply) if message.wait_bit => session.reply(system_bytes, reply.expect("valid reply"))?,
            Some(_) => {}
            None => {
                if message.wait_bit {
                    session.reply(system_bytes, SecsMessage::raw(message.stream, 0, false, None))?;
                }
                continue;
            }
        }
        let ev = match TelemetryEvent::from_message(&message, &summary.equipment_id, &summary.channels, clock_ms) {
            Ok(ev) => ev,
            Err(e) => {
                warn!(error = %e, header = %message.header(), "dropping message");
                continue;
            }
        };
        match &ev.kind {
            EventKind::EventReport { .. } => {
                summary.reports += 1;
                clock_ms = ev.timestamp_ms;
            }
            EventKind::StateTransition { .. } => {
                summary.transitions += 1;
                clock_ms = ev.timestamp_ms;
            }
            EventKind::Alarm { .. } => summary.alarms += 1,
        }
        if let Some(log) = log {
            log.append(ev.clone())?;
        }
        summary.events.push(ev);
    }
    Ok(summary)
}
