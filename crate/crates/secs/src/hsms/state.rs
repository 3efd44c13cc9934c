//! HSMS connection state machine.
//!
//! [`ConnectionState::step`] is a pure transition function: it never performs
//! I/O or reads a clock. Timers are named by [`TimerId`]; the driver starts and
//! cancels them on request and feeds expiries back in as events. T8 is the one
//! exception: the byte reader detects inter-character gaps itself and reports
//! them as `TimerExpired(TimerId::T8)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Duration;

use crate::hsms::frame::{reject_reason, select_status, HsmsFrame, SType};
use crate::message::SecsMessage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    /// Host side: opens the TCP connection and sends Select.req.
    Active,
    /// Equipment side: listens and answers Select.req.
    Passive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    NotConnected,
    ConnectedNotSelected,
    Selected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TimerId {
    /// Reply timeout for the data transaction with these system bytes.
    T3(u32),
    /// Connect separation.
    T5,
    /// Control transaction timeout.
    T6(u32),
    /// Not-selected timeout.
    T7,
    /// Inter-character timeout, reported by the reader.
    T8,
}

impl fmt::Display for TimerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimerId::T3(sb) => write!(f, "T3[{sb}]"),
            TimerId::T5 => f.write_str("T5"),
            TimerId::T6(sb) => write!(f, "T6[{sb}]"),
            TimerId::T7 => f.write_str("T7"),
            TimerId::T8 => f.write_str("T8"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Timeouts {
    pub t3: Duration,
    pub t5: Duration,
    pub t6: Duration,
    pub t7: Duration,
    pub t8: Duration,
}

impl Default for Timeouts {
    fn default() -> Self {
        Timeouts {
            t3: Duration::from_secs(45),
            t5: Duration::from_secs(10),
            t6: Duration::from_secs(5),
            t7: Duration::from_secs(10),
            t8: Duration::from_secs(5),
        }
    }
}

impl Timeouts {
    pub fn duration(&self, timer: TimerId) -> Duration {
        match timer {
            TimerId::T3(_) => self.t3,
            TimerId::T5 => self.t5,
            TimerId::T6(_) => self.t6,
            TimerId::T7 => self.t7,
            TimerId::T8 => self.t8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConnectionConfig {
    pub role: Role,
    /// Session id for data messages; control messages use 0xFFFF.
    pub session_id: u16,
    pub timeouts: Timeouts,
}

impl ConnectionConfig {
    pub fn new(role: Role) -> Self {
        ConnectionConfig {
            role,
            session_id: 0x0001,
            timeouts: Timeouts::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TransactionKind {
    Data { stream: u8, function: u8 },
    Select,
    Deselect,
    Linktest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PendingTransaction {
    pub kind: TransactionKind,
    /// The single timer guarding this transaction.
    pub timer: TimerId,
    pub timeout: Duration,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ControlRequest {
    Select,
    Deselect,
    Linktest,
    Separate,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Event {
    TcpConnected,
    FrameReceived(HsmsFrame),
    TimerExpired(TimerId),
    /// Send a primary message; W-bit messages open a T3 transaction.
    SendRequest(SecsMessage),
    SendReply {
        system_bytes: u32,
        message: SecsMessage,
    },
    SendControl(ControlRequest),
    Disconnect,
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::TcpConnected => "TcpConnected",
            Event::FrameReceived(_) => "FrameReceived",
            Event::TimerExpired(_) => "TimerExpired",
            Event::SendRequest(_) => "SendRequest",
            Event::SendReply { .. } => "SendReply",
            Event::SendControl(_) => "SendControl",
            Event::Disconnect => "Disconnect",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Notice {
    Selected,
    Deselected,
    LinktestCompleted { system_bytes: u32 },
    Separated,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProtocolError {
    IllegalEvent { phase: Phase, event: &'static str },
    NotSelected,
    ReplyTimeout { system_bytes: u32 },
    ControlTimeout { system_bytes: u32 },
    NotSelectedTimeout,
    InterByteTimeout,
    SelectRefused { status: u8 },
    Rejected { system_bytes: u32, reason: u8 },
    UnexpectedReply { system_bytes: u32 },
    UnsupportedSType(u8),
    UnsupportedPType(u8),
    MalformedMessage(String),
}

impl fmt::Display for ProtocolError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProtocolError::IllegalEvent { phase, event } => {
                write!(f, "event {event} is illegal in phase {phase:?}")
            }
            ProtocolError::NotSelected => f.write_str("data messages require the Selected state"),
            ProtocolError::ReplyTimeout { system_bytes } => {
                write!(f, "T3 reply timeout for transaction {system_bytes}")
            }
            ProtocolError::ControlTimeout { system_bytes } => {
                write!(f, "T6 control timeout for transaction {system_bytes}")
            }
            ProtocolError::NotSelectedTimeout => f.write_str("T7 expired before selection"),
            ProtocolError::InterByteTimeout => f.write_str("T8 inter-character timeout"),
            ProtocolError::SelectRefused { status } => {
                write!(f, "Select.rsp refused with status {status}")
            }
            ProtocolError::Rejected { system_bytes, reason } => {
                write!(f, "peer rejected transaction {system_bytes} (reason {reason})")
            }
            ProtocolError::UnexpectedReply { system_bytes } => {
                write!(f, "reply {system_bytes} matches no open transaction")
            }
            ProtocolError::UnsupportedSType(s) => write!(f, "unsupported s_type {s}"),
            ProtocolError::UnsupportedPType(p) => write!(f, "unsupported p_type {p}"),
            ProtocolError::MalformedMessage(e) => write!(f, "malformed message: {e}"),
        }
    }
}

impl std::error::Error for ProtocolError {}

#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    SendFrame(HsmsFrame),
    DeliverMessage {
        system_bytes: u32,
        message: SecsMessage,
        /// Set when the message closes one of our open transactions.
        in_reply_to: Option<u32>,
    },
    CloseConnection,
    StartTimer {
        timer: TimerId,
        duration: Duration,
    },
    CancelTimer(TimerId),
    Notify(Notice),
    RaiseError(ProtocolError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConnectionState {
    pub config: ConnectionConfig,
    phase: Phase,
    pending: BTreeMap<u32, PendingTransaction>,
    running: BTreeSet<TimerId>,
    next_system_bytes: u32,
}

impl ConnectionState {
    pub fn new(config: ConnectionConfig) -> Self {
        ConnectionState {
            config,
            phase: Phase::NotConnected,
            pending: BTreeMap::new(),
            running: BTreeSet::new(),
            next_system_bytes: 1,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn pending(&self) -> &BTreeMap<u32, PendingTransaction> {
        &self.pending
    }

    pub fn running_timers(&self) -> &BTreeSet<TimerId> {
        &self.running
    }

    /// Pure transition: `(self, event) -> (next, actions)`.
    pub fn step(&self, event: Event) -> (ConnectionState, Vec<Action>) {
        let mut t = Transition {
            state: self.clone(),
            actions: Vec::new(),
        };
        t.apply(event);
        (t.state, t.actions)
    }
}

/// Free-function form of [`ConnectionState::step`].
pub fn connection_step(state: &ConnectionState, event: Event) -> (ConnectionState, Vec<Action>) {
    state.step(event)
}

struct Transition {
    state: ConnectionState,
    actions: Vec<Action>,
}

impl Transition {
    fn emit(&mut self, action: Action) {
        self.actions.push(action);
    }

    fn error(&mut self, e: ProtocolError) {
        self.emit(Action::RaiseError(e));
    }

    fn illegal(&mut self, event: &Event) {
        let phase = self.state.phase;
        self.error(ProtocolError::IllegalEvent {
            phase,
            event: event.name(),
        });
    }

    fn alloc_system_bytes(&mut self) -> u32 {
        let mut sb = self.state.next_system_bytes;
        while self.state.pending.contains_key(&sb) || sb == 0 {
            sb = sb.wrapping_add(1);
        }
        self.state.next_system_bytes = sb.wrapping_add(1);
        sb
    }

    fn start_timer(&mut self, timer: TimerId) {
        let duration = self.state.config.timeouts.duration(timer);
        self.state.running.insert(timer);
        self.emit(Action::StartTimer { timer, duration });
    }

    fn cancel_timer(&mut self, timer: TimerId) {
        if self.state.running.remove(&timer) {
            self.emit(Action::CancelTimer(timer));
        }
    }

    fn open(&mut self, system_bytes: u32, kind: TransactionKind) {
        let timer = match kind {
            TransactionKind::Data { .. } => TimerId::T3(system_bytes),
            _ => TimerId::T6(system_bytes),
        };
        let timeout = self.state.config.timeouts.duration(timer);
        self.state
            .pending
            .insert(system_bytes, PendingTransaction { kind, timer, timeout });
        self.start_timer(timer);
    }

    /// Close an open transaction of the given shape, cancelling its timer.
    fn close_transaction(&mut self, system_bytes: u32, matches: impl Fn(TransactionKind) -> bool) -> bool {
        match self.state.pending.get(&system_bytes) {
            Some(p) if matches(p.kind) => {
                let timer = p.timer;
                self.state.pending.remove(&system_bytes);
                self.cancel_timer(timer);
                true
            }
            _ => false,
        }
    }

    fn drop_data_transactions(&mut self) {
        let data: Vec<u32> = self
            .state
            .pending
            .iter()
            .filter(|(_, p)| matches!(p.kind, TransactionKind::Data { .. }))
            .map(|(&sb, _)| sb)
            .collect();
        for sb in data {
            self.close_transaction(sb, |_| true);
        }
    }

    fn enter_not_selected(&mut self) {
        self.drop_data_transactions();
        self.state.phase = Phase::ConnectedNotSelected;
        self.start_timer(TimerId::T7);
        self.emit(Action::Notify(Notice::Deselected));
    }

    fn enter_selected(&mut self) {
        self.cancel_timer(TimerId::T7);
        self.state.phase = Phase::Selected;
        self.emit(Action::Notify(Notice::Selected));
    }

    fn close_all(&mut self) {
        let timers: Vec<TimerId> = self.state.running.iter().copied().collect();
        for timer in timers {
            self.cancel_timer(timer);
        }
        self.state.pending.clear();
        self.state.phase = Phase::NotConnected;
        self.emit(Action::CloseConnection);
        self.emit(Action::Notify(Notice::Separated));
        if self.state.config.role == Role::Active {
            self.start_timer(TimerId::T5);
        }
    }

    fn send_control(&mut self, s_type: SType) -> u32 {
        let sb = self.alloc_system_bytes();
        let kind = match s_type {
            SType::SelectReq => TransactionKind::Select,
            SType::DeselectReq => TransactionKind::Deselect,
            SType::LinktestReq => TransactionKind::Linktest,
            _ => unreachable!("only request types open transactions"),
        };
        self.emit(Action::SendFrame(HsmsFrame::control(
            s_type,
            crate::hsms::frame::CONTROL_SESSION_ID,
            sb,
        )));
        self.open(sb, kind);
        sb
    }

    fn apply(&mut self, event: Event) {
        let connected = self.state.phase != Phase::NotConnected;
        match event {
            Event::TcpConnected => {
                if connected {
                    return self.illegal(&Event::TcpConnected);
                }
                self.cancel_timer(TimerId::T5);
                self.state.phase = Phase::ConnectedNotSelected;
                self.start_timer(TimerId::T7);
                if self.state.config.role == Role::Active {
                    self.send_control(SType::SelectReq);
                }
            }
            Event::Disconnect => {
                if !connected {
                    return self.illegal(&Event::Disconnect);
                }
                self.close_all();
            }
            Event::FrameReceived(frame) => {
                if !connected {
                    let e = Event::FrameReceived(frame);
                    return self.illegal(&e);
                }
                self.frame_received(frame);
            }
            Event::TimerExpired(timer) => self.timer_expired(timer),
            Event::SendRequest(message) => {
                if self.state.phase != Phase::Selected {
                    return self.error(ProtocolError::NotSelected);
                }
                if !message.is_primary() {
                    let e = Event::SendRequest(message);
                    return self.illegal(&e);
                }
                let sb = self.alloc_system_bytes();
                match HsmsFrame::data(self.state.config.session_id, &message, sb) {
                    Ok(frame) => {
                        self.emit(Action::SendFrame(frame));
                        if message.wait_bit {
                            self.open(
                                sb,
                                TransactionKind::Data {
                                    stream: message.stream,
                                    function: message.function,
                                },
                            );
                        }
                    }
                    Err(e) => self.error(ProtocolError::MalformedMessage(e.to_string())),
                }
            }
            Event::SendReply { system_bytes, message } => {
                if self.state.phase != Phase::Selected {
                    return self.error(ProtocolError::NotSelected);
                }
                match HsmsFrame::data(self.state.config.session_id, &message, system_bytes) {
                    Ok(frame) => self.emit(Action::SendFrame(frame)),
                    Err(e) => self.error(ProtocolError::MalformedMessage(e.to_string())),
                }
            }
            Event::SendControl(req) => self.control_request(req),
        }
    }

    fn control_request(&mut self, req: ControlRequest) {
        let phase = self.state.phase;
        let event = Event::SendControl(req);
        match (req, phase) {
            (_, Phase::NotConnected) => self.illegal(&event),
            (ControlRequest::Select, Phase::ConnectedNotSelected) => {
                self.send_control(SType::SelectReq);
            }
            (ControlRequest::Select, Phase::Selected) => self.illegal(&event),
            (ControlRequest::Deselect, Phase::Selected) => {
                self.send_control(SType::DeselectReq);
            }
            (ControlRequest::Deselect, Phase::ConnectedNotSelected) => self.illegal(&event),
            (ControlRequest::Linktest, _) => {
                self.send_control(SType::LinktestReq);
            }
            (ControlRequest::Separate, _) => {
                let sb = self.alloc_system_bytes();
                self.emit(Action::SendFrame(HsmsFrame::separate_req(sb)));
                self.close_all();
            }
        }
    }

    fn frame_received(&mut self, frame: HsmsFrame) {
        let sb = frame.system_bytes;
        if frame.p_type != 0 {
            self.emit(Action::SendFrame(HsmsFrame::reject_req(
                &frame,
                reject_reason::PTYPE_NOT_SUPPORTED,
            )));
            return self.error(ProtocolError::UnsupportedPType(frame.p_type));
        }
        let Some(stype) = frame.stype() else {
            self.emit(Action::SendFrame(HsmsFrame::reject_req(
                &frame,
                reject_reason::STYPE_NOT_SUPPORTED,
            )));
            return self.error(ProtocolError::UnsupportedSType(frame.s_type));
        };
        let selected = self.state.phase == Phase::Selected;
        match stype {
            SType::SelectReq => {
                if selected {
                    self.emit(Action::SendFrame(HsmsFrame::select_rsp(
                        sb,
                        select_status::ALREADY_ACTIVE,
                    )));
                } else {
                    self.emit(Action::SendFrame(HsmsFrame::select_rsp(sb, select_status::OK)));
                    self.enter_selected();
                }
            }
            SType::SelectRsp => {
                if !self.close_transaction(sb, |k| k == TransactionKind::Select) {
                    return self.reject_not_open(&frame);
                }
                let status = frame.header_byte3;
                if status != select_status::OK {
                    self.error(ProtocolError::SelectRefused { status });
                } else if !selected {
                    self.enter_selected();
                }
            }
            SType::DeselectReq => {
                if selected {
                    self.emit(Action::SendFrame(HsmsFrame::deselect_rsp(sb, 0)));
                    self.enter_not_selected();
                } else {
                    self.emit(Action::SendFrame(HsmsFrame::deselect_rsp(sb, 1)));
                }
            }
            SType::DeselectRsp => {
                if !self.close_transaction(sb, |k| k == TransactionKind::Deselect) {
                    return self.reject_not_open(&frame);
                }
                if frame.header_byte3 == 0 && selected {
                    self.enter_not_selected();
                }
            }
            SType::LinktestReq => {
                self.emit(Action::SendFrame(HsmsFrame::linktest_rsp(sb)));
            }
            SType::LinktestRsp => {
                if !self.close_transaction(sb, |k| k == TransactionKind::Linktest) {
                    return self.reject_not_open(&frame);
                }
                self.emit(Action::Notify(Notice::LinktestCompleted { system_bytes: sb }));
            }
            SType::RejectReq => {
                self.close_transaction(sb, |_| true);
                self.error(ProtocolError::Rejected {
                    system_bytes: sb,
                    reason: frame.header_byte3,
                });
            }
            SType::SeparateReq => self.close_all(),
            SType::Data => {
                if !selected {
                    self.emit(Action::SendFrame(HsmsFrame::reject_req(
                        &frame,
                        reject_reason::ENTITY_NOT_SELECTED,
                    )));
                    return self.error(ProtocolError::NotSelected);
                }
                let message = match frame.to_message() {
                    Ok(m) => m,
                    Err(e) => return self.error(ProtocolError::MalformedMessage(e.to_string())),
                };
                if message.is_primary() {
                    self.emit(Action::DeliverMessage {
                        system_bytes: sb,
                        message,
                        in_reply_to: None,
                    });
                } else if self.close_transaction(sb, |k| matches!(k, TransactionKind::Data { .. })) {
                    self.emit(Action::DeliverMessage {
                        system_bytes: sb,
                        message,
                        in_reply_to: Some(sb),
                    });
                } else {
                    self.error(ProtocolError::UnexpectedReply { system_bytes: sb });
                }
            }
        }
    }

    fn reject_not_open(&mut self, frame: &HsmsFrame) {
        self.emit(Action::SendFrame(HsmsFrame::reject_req(
            frame,
            reject_reason::TRANSACTION_NOT_OPEN,
        )));
        self.error(ProtocolError::Rejected {
            system_bytes: frame.system_bytes,
            reason: reject_reason::TRANSACTION_NOT_OPEN,
        });
    }

    fn timer_expired(&mut self, timer: TimerId) {
        if timer == TimerId::T8 {
            if self.state.phase == Phase::NotConnected {
                return;
            }
            self.error(ProtocolError::InterByteTimeout);
            return self.close_all();
        }
        // stale expiries (already cancelled) are ignored
        if !self.state.running.remove(&timer) {
            return;
        }
        match timer {
            TimerId::T3(sb) => {
                self.state.pending.remove(&sb);
                self.error(ProtocolError::ReplyTimeout { system_bytes: sb });
            }
            TimerId::T6(sb) => {
                self.state.pending.remove(&sb);
                self.error(ProtocolError::ControlTimeout { system_bytes: sb });
                self.close_all();
            }
            TimerId::T7 => {
                self.error(ProtocolError::NotSelectedTimeout);
                self.close_all();
            }
            TimerId::T5 | TimerId::T8 => {}
        }
    }
}
