//! Blocking TCP driver for [`ConnectionState`].
//!
//! One event-loop thread owns the state and the timer deadlines; a reader
//! thread turns socket bytes into `FrameReceived` events. Callers talk to the
//! loop over channels, so an [`HsmsSession`] can be shared across threads.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, ErrorKind, Read, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use thiserror::Error;
use tracing::{debug, warn};

use crate::hsms::frame::{decode_frame, encode_frame, Decoded, DEFAULT_MAX_FRAME_LEN};
use crate::hsms::state::{
    Action, ConnectionConfig, ConnectionState, ControlRequest, Event, Notice, Phase, ProtocolError, Role, TimerId,
};
use crate::message::SecsMessage;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("timed out waiting for {0}")]
    Timeout(&'static str),
    #[error("session is closed")]
    Closed,
}

#[derive(Clone, Debug)]
pub struct SessionConfig {
    pub connection: ConnectionConfig,
    pub max_frame_len: usize,
}

impl SessionConfig {
    pub fn new(role: Role) -> Self {
        SessionConfig {
            connection: ConnectionConfig::new(role),
            max_frame_len: DEFAULT_MAX_FRAME_LEN,
        }
    }
}

/// Things the loop reports that no caller is explicitly waiting for.
#[derive(Clone, Debug, PartialEq)]
pub enum SessionEvent {
    /// A primary message from the peer, or a reply nobody waited for.
    Message {
        system_bytes: u32,
        message: SecsMessage,
    },
    Selected,
    Deselected,
    Error(ProtocolError),
    Closed,
}

type Waiter<T> = Sender<Result<T, SessionError>>;

enum Command {
    Step(Event),
    Request {
        message: SecsMessage,
        waiter: Waiter<SecsMessage>,
    },
    Linktest {
        waiter: Waiter<()>,
    },
    Shutdown,
}

pub struct HsmsSession {
    commands: Sender<Command>,
    events: Mutex<Receiver<SessionEvent>>,
    phase: Arc<(Mutex<Phase>, Condvar)>,
    worker: Mutex<Option<JoinHandle<()>>>,
}

impl HsmsSession {
    /// Connect as the active side; Select.req goes out immediately.
    pub fn connect(addr: impl ToSocketAddrs, config: SessionConfig) -> Result<Self, SessionError> {
        let stream = TcpStream::connect(addr)?;
        Self::start(stream, config)
    }

    /// Drive an already-established TCP stream.
    pub fn start(stream: TcpStream, config: SessionConfig) -> Result<Self, SessionError> {
        stream.set_nodelay(true)?;
        let (cmd_tx, cmd_rx) = mpsc::channel();
        let (evt_tx, evt_rx) = mpsc::channel();
        let phase = Arc::new((Mutex::new(Phase::NotConnected), Condvar::new()));

        let reader_stream = stream.try_clone()?;
        let reader_tx = cmd_tx.clone();
        let t8 = config.connection.timeouts.t8;
        let max = config.max_frame_len;
        thread::Builder::new()
            .name("hsms-reader".into())
            .spawn(move || read_loop(reader_stream, reader_tx, t8, max))?;

        let mut driver = Driver {
            state: ConnectionState::new(config.connection),
            stream,
            deadlines: BTreeMap::new(),
            requests: HashMap::new(),
            linktests: HashMap::new(),
            events: evt_tx,
            phase: phase.clone(),
            closed: false,
        };
        let worker = thread::Builder::new().name("hsms-session".into()).spawn(move || {
            driver.step(Event::TcpConnected);
            driver.run(cmd_rx);
        })?;

        Ok(HsmsSession {
            commands: cmd_tx,
            events: Mutex::new(evt_rx),
            phase,
            worker: Mutex::new(Some(worker)),
        })
    }

    pub fn phase(&self) -> Phase {
        *self.phase.0.lock().unwrap()
    }

    pub fn is_selected(&self) -> bool {
        self.phase() == Phase::Selected
    }

    pub fn wait_selected(&self, timeout: Duration) -> Result<(), SessionError> {
        let (lock, cv) = &*self.phase;
        let deadline = Instant::now() + timeout;
        let mut phase = lock.lock().unwrap();
        loop {
            if *phase == Phase::Selected {
                return Ok(());
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(SessionError::Timeout("selection"));
            }
            phase = cv.wait_timeout(phase, deadline - now).unwrap().0;
        }
    }

    fn command(&self, cmd: Command) -> Result<(), SessionError> {
        self.commands.send(cmd).map_err(|_| SessionError::Closed)
    }

    /// Fire-and-forget send of a primary message. A W-bit reply, if any,
    /// surfaces as a [`SessionEvent::Message`].
    pub fn send(&self, message: SecsMessage) -> Result<(), SessionError> {
        self.command(Command::Step(Event::SendRequest(message)))
    }

    /// Send a W-bit primary and block for its reply (bounded by T3).
    pub fn request(&self, message: SecsMessage) -> Result<SecsMessage, SessionError> {
        let (tx, rx) = mpsc::channel();
        self.command(Command::Request { message, waiter: tx })?;
        rx.recv().map_err(|_| SessionError::Closed)?
    }

    pub fn reply(&self, system_bytes: u32, message: SecsMessage) -> Result<(), SessionError> {
        self.command(Command::Step(Event::SendReply { system_bytes, message }))
    }

    /// Linktest round trip; returns the measured latency.
    pub fn linktest(&self) -> Result<Duration, SessionError> {
        let (tx, rx) = mpsc::channel();
        let start = Instant::now();
        self.command(Command::Linktest { waiter: tx })?;
        rx.recv().map_err(|_| SessionError::Closed)??;
        Ok(start.elapsed())
    }

    pub fn deselect(&self) -> Result<(), SessionError> {
        self.command(Command::Step(Event::SendControl(ControlRequest::Deselect)))
    }

    pub fn recv_event(&self, timeout: Duration) -> Option<SessionEvent> {
        self.events.lock().unwrap().recv_timeout(timeout).ok()
    }

    /// Send Separate.req (if connected) and stop the loop.
    pub fn close(&self) {
        if self.phase() != Phase::NotConnected {
            let _ = self.command(Command::Step(Event::SendControl(ControlRequest::Separate)));
        }
        let _ = self.command(Command::Shutdown);
        if let Some(handle) = self.worker.lock().unwrap().take() {
            let _ = handle.join();
        }
    }
}

impl Drop for HsmsSession {
    fn drop(&mut self) {
        self.close();
    }
}

fn read_loop(mut stream: TcpStream, tx: Sender<Command>, t8: Duration, max_len: usize) {
    let mut buf: Vec<u8> = Vec::new();
    let mut chunk = [0u8; 8192];
    loop {
        // T8 only applies while a frame is partially received
        let timeout = if buf.is_empty() { None } else { Some(t8) };
        if stream.set_read_timeout(timeout).is_err() {
            break;
        }
        match stream.read(&mut chunk) {
            Ok(0) => break,
            Ok(n) => buf.extend_from_slice(&chunk[..n]),
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                let _ = tx.send(Command::Step(Event::TimerExpired(TimerId::T8)));
                return;
            }
            Err(e) if e.kind() == ErrorKind::Interrupted => continue,
            Err(_) => break,
        }
        loop {
            match decode_frame(&buf, max_len) {
                Ok(Decoded::Frame { frame, consumed }) => {
                    buf.drain(..consumed);
                    if tx.send(Command::Step(Event::FrameReceived(frame))).is_err() {
                        return;
                    }
                }
                Ok(Decoded::NeedMoreBytes) => break,
                Err(e) => {
                    warn!(error = %e, "unrecoverable framing error");
                    let _ = tx.send(Command::Step(Event::Disconnect));
                    return;
                }
            }
        }
    }
    let _ = tx.send(Command::Step(Event::Disconnect));
}

struct Driver {
    state: ConnectionState,
    stream: TcpStream,
    deadlines: BTreeMap<TimerId, Instant>,
    requests: HashMap<u32, Waiter<SecsMessage>>,
    linktests: HashMap<u32, Waiter<()>>,
    events: Sender<SessionEvent>,
    phase: Arc<(Mutex<Phase>, Condvar)>,
    closed: bool,
}

impl Driver {
    fn run(&mut self, commands: Receiver<Command>) {
        while !self.closed {
            let next = self.deadlines.values().min().copied();
            let cmd = match next {
                Some(at) => {
                    let wait = at.saturating_duration_since(Instant::now());
                    match commands.recv_timeout(wait) {
                        Ok(c) => Some(c),
                        Err(RecvTimeoutError::Timeout) => None,
                        Err(RecvTimeoutError::Disconnected) => break,
                    }
                }
                None => match commands.recv() {
                    Ok(c) => Some(c),
                    Err(_) => break,
                },
            };
            match cmd {
                None => self.fire_due_timers(),
                Some(Command::Step(event)) => self.step(event),
                Some(Command::Request { message, waiter }) => self.request(message, waiter),
                Some(Command::Linktest { waiter }) => self.linktest(waiter),
                Some(Command::Shutdown) => break,
            }
        }
        self.finish();
    }

    fn fire_due_timers(&mut self) {
        let now = Instant::now();
        let due: Vec<TimerId> = self
            .deadlines
            .iter()
            .filter(|(_, &at)| at <= now)
            .map(|(&t, _)| t)
            .collect();
        for timer in due {
            self.deadlines.remove(&timer);
            self.step(Event::TimerExpired(timer));
        }
    }

    fn step(&mut self, event: Event) {
        let (next, actions) = self.state.step(event);
        self.state = next;
        self.publish_phase();
        for action in actions {
            match action {
                Action::SendFrame(frame) => {
                    let bytes = match encode_frame(&frame) {
                        Ok(b) => b,
                        Err(e) => {
                            warn!(error = %e, "dropping unencodable frame");
                            continue;
                        }
                    };
                    if let Err(e) = self.stream.write_all(&bytes) {
                        debug!(error = %e, "write failed");
                    }
                }
                Action::DeliverMessage {
                    system_bytes,
                    message,
                    in_reply_to,
                } => {
                    let waiter = in_reply_to.and_then(|sb| self.requests.remove(&sb));
                    match waiter {
                        Some(w) => {
                            let _ = w.send(Ok(message));
                        }
                        None => {
                            let _ = self.events.send(SessionEvent::Message { system_bytes, message });
                        }
                    }
                }
                Action::CloseConnection => {
                    let _ = self.stream.shutdown(Shutdown::Both);
                    self.closed = true;
                }
                Action::StartTimer { timer, duration } => {
                    // T5 belongs to reconnect logic, which lives with the caller
                    if timer != TimerId::T5 {
                        self.deadlines.insert(timer, Instant::now() + duration);
                    }
                }
                Action::CancelTimer(timer) => {
                    self.deadlines.remove(&timer);
                }
                Action::Notify(notice) => match notice {
                    Notice::Selected => {
                        let _ = self.events.send(SessionEvent::Selected);
                    }
                    Notice::Deselected => {
                        let _ = self.events.send(SessionEvent::Deselected);
                    }
                    Notice::LinktestCompleted { system_bytes } => {
                        if let Some(w) = self.linktests.remove(&system_bytes) {
                            let _ = w.send(Ok(()));
                        }
                    }
                    Notice::Separated => {}
                },
                Action::RaiseError(e) => self.route_error(e),
            }
        }
    }

    fn route_error(&mut self, e: ProtocolError) {
        let waiter_sb = match &e {
            ProtocolError::ReplyTimeout { system_bytes } | ProtocolError::Rejected { system_bytes, .. } => {
                Some(*system_bytes)
            }
            _ => None,
        };
        if let Some(sb) = waiter_sb {
            if let Some(w) = self.requests.remove(&sb) {
                let _ = w.send(Err(e.into()));
                return;
            }
        }
        if let ProtocolError::ControlTimeout { system_bytes } = &e {
            if let Some(w) = self.linktests.remove(system_bytes) {
                let _ = w.send(Err(e.into()));
                return;
            }
        }
        debug!(error = %e, "protocol error");
        let _ = self.events.send(SessionEvent::Error(e));
    }

    fn request(&mut self, message: SecsMessage, waiter: Waiter<SecsMessage>) {
        let mut message = message;
        message.wait_bit = true;
        let before: Vec<u32> = self.state.pending().keys().copied().collect();
        self.step(Event::SendRequest(message));
        let opened = self.state.pending().keys().copied().find(|sb| !before.contains(sb));
        match opened {
            Some(sb) => {
                self.requests.insert(sb, waiter);
            }
            None => {
                let _ = waiter.send(Err(if self.state.phase() == Phase::Selected {
                    SessionError::Closed
                } else {
                    ProtocolError::NotSelected.into()
                }));
            }
        }
    }

    fn linktest(&mut self, waiter: Waiter<()>) {
        let before: Vec<u32> = self.state.pending().keys().copied().collect();
        self.step(Event::SendControl(ControlRequest::Linktest));
        let opened = self.state.pending().keys().copied().find(|sb| !before.contains(sb));
        match opened {
            Some(sb) => {
                self.linktests.insert(sb, waiter);
            }
            None => {
                let _ = waiter.send(Err(SessionError::Closed));
            }
        }
    }

    fn publish_phase(&self) {
        let (lock, cv) = &*self.phase;
        let mut p = lock.lock().unwrap();
        if *p != self.state.phase() {
            *p = self.state.phase();
            cv.notify_all();
        }
    }

    fn finish(&mut self) {
        let _ = self.stream.shutdown(Shutdown::Both);
        for (_, w) in self.requests.drain() {
            let _ = w.send(Err(SessionError::Closed));
        }
        for (_, w) in self.linktests.drain() {
            let _ = w.send(Err(SessionError::Closed));
        }
        let (lock, cv) = &*self.phase;
        *lock.lock().unwrap() = Phase::NotConnected;
        cv.notify_all();
        let _ = self.events.send(SessionEvent::Closed);
    }
}
