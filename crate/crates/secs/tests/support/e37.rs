//! Documented transition table for the HSMS connection machine and the
//! fixtures used to drive it.
#![allow(dead_code)]

use fa_secs::hsms::frame::CONTROL_SESSION_ID;
use fa_secs::hsms::state::TransactionKind;
use fa_secs::hsms::{
    Action, ConnectionConfig, ConnectionState, ControlRequest, Event, HsmsFrame, Notice, Phase, Role, SType, TimerId,
};
use fa_secs::SecsMessage;

pub fn sig(a: &Action) -> String {
    match a {
        Action::SendFrame(f) => match f.stype() {
            Some(SType::SelectRsp) => format!("tx:SelectRsp:{}", f.header_byte3),
            Some(SType::DeselectRsp) => format!("tx:DeselectRsp:{}", f.header_byte3),
            Some(SType::RejectReq) => format!("tx:Reject:{}", f.header_byte3),
            Some(s) => format!("tx:{s:?}"),
            None => "tx:?".into(),
        },
        Action::DeliverMessage { in_reply_to, .. } => {
            if in_reply_to.is_some() {
                "deliver:reply".into()
            } else {
                "deliver".into()
            }
        }
        Action::CloseConnection => "close".into(),
        Action::StartTimer { timer, .. } => format!("start:{}", timer_kind(*timer)),
        Action::CancelTimer(t) => format!("cancel:{}", timer_kind(*t)),
        Action::Notify(n) => match n {
            Notice::Selected => "notify:Selected".into(),
            Notice::Deselected => "notify:Deselected".into(),
            Notice::LinktestCompleted { .. } => "notify:Linktest".into(),
            Notice::Separated => "notify:Separated".into(),
        },
        Action::RaiseError(e) => {
            let name = format!("{e:?}");
            let end = name.find([' ', '(', '{']).unwrap_or(name.len());
            format!("err:{}", &name[..end])
        }
    }
}

pub fn timer_kind(t: TimerId) -> &'static str {
    match t {
        TimerId::T3(_) => "T3",
        TimerId::T5 => "T5",
        TimerId::T6(_) => "T6",
        TimerId::T7 => "T7",
        TimerId::T8 => "T8",
    }
}

pub fn s1f1() -> SecsMessage {
    SecsMessage::primary(1, 1, true, None).unwrap()
}

pub fn s1f2() -> SecsMessage {
    SecsMessage::reply(1, 2, None).unwrap()
}

pub fn run(s: ConnectionState, events: Vec<Event>) -> ConnectionState {
    events.into_iter().fold(s, |s, e| s.step(e).0)
}

/// Active side, never connected.
pub fn not_connected() -> ConnectionState {
    ConnectionState::new(ConnectionConfig::new(Role::Active))
}

/// Select (sb 1) and Linktest (sb 2) outstanding.
pub fn not_selected() -> ConnectionState {
    run(
        not_connected(),
        vec![Event::TcpConnected, Event::SendControl(ControlRequest::Linktest)],
    )
}

/// Data request (sb 2), Linktest (sb 3) and Deselect (sb 4) outstanding.
pub fn selected() -> ConnectionState {
    run(
        not_connected(),
        vec![
            Event::TcpConnected,
            Event::FrameReceived(HsmsFrame::select_rsp(1, 0)),
            Event::SendRequest(s1f1()),
            Event::SendControl(ControlRequest::Linktest),
            Event::SendControl(ControlRequest::Deselect),
        ],
    )
}

pub fn pending_of(s: &ConnectionState, want: fn(TransactionKind) -> bool) -> Option<u32> {
    s.pending().iter().find(|(_, p)| want(p.kind)).map(|(&sb, _)| sb)
}

pub fn is_data(k: TransactionKind) -> bool {
    matches!(k, TransactionKind::Data { .. })
}

pub fn data_frame(msg: &SecsMessage, sb: u32) -> HsmsFrame {
    HsmsFrame::data(1, msg, sb).unwrap()
}

pub const LABELS: [&str; 29] = [
    "TcpConnected",
    "Disconnect",
    "rx SelectReq",
    "rx SelectRsp pending",
    "rx SelectRsp stray",
    "rx DeselectReq",
    "rx DeselectRsp pending",
    "rx LinktestReq",
    "rx LinktestRsp pending",
    "rx LinktestRsp stray",
    "rx RejectReq",
    "rx SeparateReq",
    "rx Data primary",
    "rx Data reply pending",
    "rx Data reply stray",
    "rx bad p_type",
    "rx unknown s_type",
    "T3",
    "T5",
    "T6",
    "T7",
    "T8",
    "send request",
    "send request with reply function",
    "send reply",
    "control Select",
    "control Deselect",
    "control Linktest",
    "control Separate",
];

pub fn event(label: &str, s: &ConnectionState) -> Event {
    let or_stray = |sb: Option<u32>| sb.unwrap_or(99);
    let select = or_stray(pending_of(s, |k| k == TransactionKind::Select));
    let deselect = or_stray(pending_of(s, |k| k == TransactionKind::Deselect));
    let linktest = or_stray(pending_of(s, |k| k == TransactionKind::Linktest));
    let data = or_stray(pending_of(s, is_data));
    let control = or_stray(pending_of(s, |k| !is_data(k)));
    let rx = Event::FrameReceived;
    match label {
        "TcpConnected" => Event::TcpConnected,
        "Disconnect" => Event::Disconnect,
        "rx SelectReq" => rx(HsmsFrame::select_req(50)),
        "rx SelectRsp pending" => rx(HsmsFrame::select_rsp(select, 0)),
        "rx SelectRsp stray" => rx(HsmsFrame::select_rsp(99, 0)),
        "rx DeselectReq" => rx(HsmsFrame::control(SType::DeselectReq, CONTROL_SESSION_ID, 51)),
        "rx DeselectRsp pending" => rx(HsmsFrame::deselect_rsp(deselect, 0)),
        "rx LinktestReq" => rx(HsmsFrame::linktest_req(52)),
        "rx LinktestRsp pending" => rx(HsmsFrame::linktest_rsp(linktest)),
        "rx LinktestRsp stray" => rx(HsmsFrame::linktest_rsp(99)),
        "rx RejectReq" => {
            let mut rejected = data_frame(&s1f1(), data);
            rejected.s_type = 0;
            rx(HsmsFrame::reject_req(&rejected, 4))
        }
        "rx SeparateReq" => rx(HsmsFrame::separate_req(53)),
        "rx Data primary" => rx(data_frame(&s1f1(), 60)),
        "rx Data reply pending" => rx(data_frame(&s1f2(), data)),
        "rx Data reply stray" => rx(data_frame(&s1f2(), 98)),
        "rx bad p_type" => {
            let mut f = HsmsFrame::linktest_req(54);
            f.p_type = 3;
            rx(f)
        }
        "rx unknown s_type" => {
            let mut f = HsmsFrame::linktest_req(55);
            f.s_type = 8;
            rx(f)
        }
        "T3" => Event::TimerExpired(TimerId::T3(data)),
        "T5" => Event::TimerExpired(TimerId::T5),
        "T6" => Event::TimerExpired(TimerId::T6(control)),
        "T7" => Event::TimerExpired(TimerId::T7),
        "T8" => Event::TimerExpired(TimerId::T8),
        "send request" => Event::SendRequest(s1f1()),
        "send request with reply function" => Event::SendRequest(s1f2()),
        "send reply" => Event::SendReply {
            system_bytes: 60,
            message: s1f2(),
        },
        "control Select" => Event::SendControl(ControlRequest::Select),
        "control Deselect" => Event::SendControl(ControlRequest::Deselect),
        "control Linktest" => Event::SendControl(ControlRequest::Linktest),
        "control Separate" => Event::SendControl(ControlRequest::Separate),
        other => panic!("unknown label {other}"),
    }
}

pub use fa_secs::hsms::Phase::{ConnectedNotSelected as CNS, NotConnected as NC, Selected as SEL};

/// (phase, event, next phase, actions).
#[rustfmt::skip]
pub fn table() -> Vec<(Phase, &'static str, Phase, &'static [&'static str])> {
    const ILLEGAL: &[&str] = &["err:IllegalEvent"];
    const NOT_SEL: &[&str] = &["err:NotSelected"];
    const NOT_OPEN: &[&str] = &["tx:Reject:3", "err:Rejected"];
    const NONE: &[&str] = &[];
    const CNS_CLOSE: &[&str] = &["cancel:T6", "cancel:T6", "cancel:T7", "close", "notify:Separated", "start:T5"];
    const SEL_CLOSE: &[&str] = &["cancel:T3", "cancel:T6", "cancel:T6", "close", "notify:Separated", "start:T5"];
    vec![
        (NC, "TcpConnected", CNS, &["start:T7", "tx:SelectReq", "start:T6"]),
        (NC, "Disconnect", NC, ILLEGAL),
        (NC, "rx SelectReq", NC, ILLEGAL),
        (NC, "rx SelectRsp pending", NC, ILLEGAL),
        (NC, "rx SelectRsp stray", NC, ILLEGAL),
        (NC, "rx DeselectReq", NC, ILLEGAL),
        (NC, "rx DeselectRsp pending", NC, ILLEGAL),
        (NC, "rx LinktestReq", NC, ILLEGAL),
        (NC, "rx LinktestRsp pending", NC, ILLEGAL),
        (NC, "rx LinktestRsp stray", NC, ILLEGAL),
        (NC, "rx RejectReq", NC, ILLEGAL),
        (NC, "rx SeparateReq", NC, ILLEGAL),
        (NC, "rx Data primary", NC, ILLEGAL),
        (NC, "rx Data reply pending", NC, ILLEGAL),
        (NC, "rx Data reply stray", NC, ILLEGAL),
        (NC, "rx bad p_type", NC, ILLEGAL),
        (NC, "rx unknown s_type", NC, ILLEGAL),
        (NC, "T3", NC, NONE),
        (NC, "T5", NC, NONE),
        (NC, "T6", NC, NONE),
        (NC, "T7", NC, NONE),
        (NC, "T8", NC, NONE),
        (NC, "send request", NC, NOT_SEL),
        (NC, "send request with reply function", NC, NOT_SEL),
        (NC, "send reply", NC, NOT_SEL),
        (NC, "control Select", NC, ILLEGAL),
        (NC, "control Deselect", NC, ILLEGAL),
        (NC, "control Linktest", NC, ILLEGAL),
        (NC, "control Separate", NC, ILLEGAL),

        (CNS, "TcpConnected", CNS, ILLEGAL),
        (CNS, "Disconnect", NC, CNS_CLOSE),
        (CNS, "rx SelectReq", SEL, &["tx:SelectRsp:0", "cancel:T7", "notify:Selected"]),
        (CNS, "rx SelectRsp pending", SEL, &["cancel:T6", "cancel:T7", "notify:Selected"]),
        (CNS, "rx SelectRsp stray", CNS, NOT_OPEN),
        (CNS, "rx DeselectReq", CNS, &["tx:DeselectRsp:1"]),
        (CNS, "rx DeselectRsp pending", CNS, NOT_OPEN),
        (CNS, "rx LinktestReq", CNS, &["tx:LinktestRsp"]),
        (CNS, "rx LinktestRsp pending", CNS, &["cancel:T6", "notify:Linktest"]),
        (CNS, "rx LinktestRsp stray", CNS, NOT_OPEN),
        (CNS, "rx RejectReq", CNS, &["err:Rejected"]),
        (CNS, "rx SeparateReq", NC, CNS_CLOSE),
        (CNS, "rx Data primary", CNS, &["tx:Reject:4", "err:NotSelected"]),
        (CNS, "rx Data reply pending", CNS, &["tx:Reject:4", "err:NotSelected"]),
        (CNS, "rx Data reply stray", CNS, &["tx:Reject:4", "err:NotSelected"]),
        (CNS, "rx bad p_type", CNS, &["tx:Reject:2", "err:UnsupportedPType"]),
        (CNS, "rx unknown s_type", CNS, &["tx:Reject:1", "err:UnsupportedSType"]),
        (CNS, "T3", CNS, NONE),
        (CNS, "T5", CNS, NONE),
        (CNS, "T6", NC, &["err:ControlTimeout", "cancel:T6", "cancel:T7", "close", "notify:Separated", "start:T5"]),
        (CNS, "T7", NC, &["err:NotSelectedTimeout", "cancel:T6", "cancel:T6", "close", "notify:Separated", "start:T5"]),
        (CNS, "T8", NC, &["err:InterByteTimeout", "cancel:T6", "cancel:T6", "cancel:T7", "close", "notify:Separated", "start:T5"]),
        (CNS, "send request", CNS, NOT_SEL),
        (CNS, "send request with reply function", CNS, NOT_SEL),
        (CNS, "send reply", CNS, NOT_SEL),
        (CNS, "control Select", CNS, &["tx:SelectReq", "start:T6"]),
        (CNS, "control Deselect", CNS, ILLEGAL),
        (CNS, "control Linktest", CNS, &["tx:LinktestReq", "start:T6"]),
        (CNS, "control Separate", NC, &["tx:SeparateReq", "cancel:T6", "cancel:T6", "cancel:T7", "close", "notify:Separated", "start:T5"]),

        (SEL, "TcpConnected", SEL, ILLEGAL),
        (SEL, "Disconnect", NC, SEL_CLOSE),
        (SEL, "rx SelectReq", SEL, &["tx:SelectRsp:1"]),
        (SEL, "rx SelectRsp pending", SEL, NOT_OPEN),
        (SEL, "rx SelectRsp stray", SEL, NOT_OPEN),
        (SEL, "rx DeselectReq", CNS, &["tx:DeselectRsp:0", "cancel:T3", "start:T7", "notify:Deselected"]),
        (SEL, "rx DeselectRsp pending", CNS, &["cancel:T6", "cancel:T3", "start:T7", "notify:Deselected"]),
        (SEL, "rx LinktestReq", SEL, &["tx:LinktestRsp"]),
        (SEL, "rx LinktestRsp pending", SEL, &["cancel:T6", "notify:Linktest"]),
        (SEL, "rx LinktestRsp stray", SEL, NOT_OPEN),
        (SEL, "rx RejectReq", SEL, &["cancel:T3", "err:Rejected"]),
        (SEL, "rx SeparateReq", NC, SEL_CLOSE),
        (SEL, "rx Data primary", SEL, &["deliver"]),
        (SEL, "rx Data reply pending", SEL, &["cancel:T3", "deliver:reply"]),
        (SEL, "rx Data reply stray", SEL, &["err:UnexpectedReply"]),
        (SEL, "rx bad p_type", SEL, &["tx:Reject:2", "err:UnsupportedPType"]),
        (SEL, "rx unknown s_type", SEL, &["tx:Reject:1", "err:UnsupportedSType"]),
        (SEL, "T3", SEL, &["err:ReplyTimeout"]),
        (SEL, "T5", SEL, NONE),
        (SEL, "T6", NC, &["err:ControlTimeout", "cancel:T3", "cancel:T6", "close", "notify:Separated", "start:T5"]),
        (SEL, "T7", SEL, NONE),
        (SEL, "T8", NC, &["err:InterByteTimeout", "cancel:T3", "cancel:T6", "cancel:T6", "close", "notify:Separated", "start:T5"]),
        (SEL, "send request", SEL, &["tx:Data", "start:T3"]),
        (SEL, "send request with reply function", SEL, ILLEGAL),
        (SEL, "send reply", SEL, &["tx:Data"]),
        (SEL, "control Select", SEL, ILLEGAL),
        (SEL, "control Deselect", SEL, &["tx:DeselectReq", "start:T6"]),
        (SEL, "control Linktest", SEL, &["tx:LinktestReq", "start:T6"]),
        (SEL, "control Separate", NC, &["tx:SeparateReq", "cancel:T3", "cancel:T6", "cancel:T6", "close", "notify:Separated", "start:T5"]),
    ]
}

/// Drive every (phase, event) pair and compare with the table. Returns the
/// number of rows checked.
pub fn check_table() -> Result<usize, String> {
    let table = table();
    let mut covered = std::collections::HashSet::new();
    for (phase, label, next, expected) in &table {
        let state = match phase {
            NC => not_connected(),
            CNS => not_selected(),
            SEL => selected(),
        };
        if state.phase() != *phase {
            return Err(format!("fixture for {phase:?} is in {:?}", state.phase()));
        }
        let (after, actions) = state.step(event(label, &state));
        let got: Vec<String> = actions.iter().map(sig).collect();
        if got != *expected {
            return Err(format!("({phase:?}, {label}): actions {got:?}, expected {expected:?}"));
        }
        if after.phase() != *next {
            return Err(format!(
                "({phase:?}, {label}): next phase {:?}, expected {next:?}",
                after.phase()
            ));
        }
        // refused events leave the state untouched
        if (*expected == ["err:IllegalEvent"] || *expected == ["err:NotSelected"]) && after != state {
            return Err(format!("({phase:?}, {label}): refused event changed the state"));
        }
        if !covered.insert((*phase as u8, *label)) {
            return Err(format!("duplicate row ({phase:?}, {label})"));
        }
    }
    for phase in [NC, CNS, SEL] {
        for label in LABELS {
            if !covered.contains(&(phase as u8, label)) {
                return Err(format!("missing row ({phase:?}, {label})"));
            }
        }
    }
    Ok(table.len())
}
