use std::io;
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use fa_secs::hsms::{HsmsSession, Role, SessionConfig, SessionError, SessionEvent};
use fa_secs::{SecsItem, SecsMessage};
use tracing::{debug, info, warn};

use super::scenario::EquipmentScenario;
use super::sim;

pub const SOFTREV: &str = "1.0.0";
/// First SVID; channel `i` is reported as SVID `SVID_BASE + i`.
pub const SVID_BASE: u32 = 1000;

#[derive(Clone, Debug)]
pub struct ServeOptions {
    /// Simulated seconds per wall second.
    pub time_scale: f64,
    /// Stop emitting after the scenario's `ticks` instead of running on.
    pub bounded: bool,
    pub session: SessionConfig,
    pub stop: Arc<AtomicBool>,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions {
            time_scale: 1.0,
            bounded: false,
            session: SessionConfig::new(Role::Passive),
            stop: Arc::new(AtomicBool::new(false)),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConnectionSummary {
    pub ticks: u64,
    pub messages_sent: u64,
    pub requests_served: u64,
}

fn s1f2(sc: &EquipmentScenario) -> SecsItem {
    SecsItem::List(vec![SecsItem::ascii(&sc.equipment_id), SecsItem::ascii(SOFTREV)])
}

/// Reply body for an equipment-side primary, or `None` if unsupported.
pub fn answer(sc: &EquipmentScenario, msg: &SecsMessage) -> Option<SecsMessage> {
    let reply = |f: u8, body: SecsItem| SecsMessage::reply(msg.stream, f, Some(body)).ok();
    match (msg.stream, msg.function) {
        (1, 1) => reply(2, s1f2(sc)),
        (1, 11) => reply(
            12,
            SecsItem::List(
                sc.pv_channels
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        SecsItem::List(vec![
                            SecsItem::u4(SVID_BASE + i as u32),
                            SecsItem::ascii(&c.name),
                            SecsItem::ascii(&c.unit),
                        ])
                    })
                    .collect(),
            ),
        ),
        (1, 13) => reply(14, SecsItem::List(vec![SecsItem::Binary(vec![0]), s1f2(sc)])),
        _ => None,
    }
}

fn handle(
    sc: &EquipmentScenario,
    session: &HsmsSession,
    event: SessionEvent,
    summary: &mut ConnectionSummary,
) -> Result<bool, SessionError> {
    match event {
        SessionEvent::Message { system_bytes, message } if message.is_primary() => {
            summary.requests_served += 1;
            match answer(sc, &message) {
                Some(reply) => session.reply(system_bytes, reply)?,
                None if message.wait_bit => {
                    // F0 aborts the transaction.
                    session.reply(system_bytes, SecsMessage::raw(message.stream, 0, false, None))?
                }
                None => {}
            }
            Ok(true)
        }
        SessionEvent::Message { .. } | SessionEvent::Selected => Ok(true),
        SessionEvent::Error(e) => {
            warn!(error = %e, "protocol error from host");
            Ok(true)
        }
        SessionEvent::Deselected | SessionEvent::Closed => Ok(false),
    }
}

/// Drive one host connection until it drops, `stop` is raised or, when
/// bounded, the scenario runs out.
pub fn serve_connection(
    sc: &EquipmentScenario,
    stream: TcpStream,
    opts: &ServeOptions,
) -> Result<ConnectionSummary, SessionError> {
    let session = HsmsSession::start(stream, opts.session.clone())?;
    let mut summary = ConnectionSummary::default();
    let result = (|| {
        session.wait_selected(opts.session.connection.timeouts.t7)?;
        info!(equipment = %sc.equipment_id, "host selected");
        let period = Duration::from_secs_f64(sc.tick_interval / opts.time_scale.max(1e-6));
        let mut next = Instant::now();
        let mut t = 0u64;
        loop {
            if opts.stop.load(Ordering::SeqCst) {
                return Ok(());
            }
            if opts.bounded && t >= sc.ticks {
                return Ok(());
            }
            let now = Instant::now();
            if now >= next {
                for ev in sim::tick(sc, t) {
                    session.send(ev.to_message(t as u32))?;
                    summary.messages_sent += 1;
                }
                summary.ticks += 1;
                t += 1;
                next += period;
                continue;
            }
            let wait = (next - now).min(Duration::from_millis(100));
            if let Some(event) = session.recv_event(wait) {
                if !handle(sc, &session, event, &mut summary)? {
                    return Ok(());
                }
            }
        }
    })();
    session.close();
    match result {
        Ok(()) | Err(SessionError::Closed) => Ok(summary),
        Err(e) => Err(e),
    }
}

/// Accept host connections one at a time until `stop` is raised. A failed
/// connection is logged and the listener keeps going.
pub fn serve(sc: &EquipmentScenario, listener: TcpListener, opts: &ServeOptions) -> io::Result<u64> {
    listener.set_nonblocking(true)?;
    let mut served = 0;
    while !opts.stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                stream.set_nonblocking(false)?;
                debug!(%peer, "host connected");
                match serve_connection(sc, stream, opts) {
                    Ok(s) => info!(%peer, ticks = s.ticks, sent = s.messages_sent, "host session ended"),
                    Err(e) => warn!(%peer, error = %e, "host session failed"),
                }
                served += 1;
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(20)),
            Err(e) => return Err(e),
        }
    }
    Ok(served)
}
