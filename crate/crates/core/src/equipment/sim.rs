use fa_secs::{decode_item, SecsMessage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::scenario::{EquipmentScenario, ScheduledKind};
use crate::telemetry::{EquipmentState, EventKind, StoreError, TelemetryEvent, TelemetryLog};

fn mix(seed: u64, channel: u64, tick: u64) -> u64 {
    // splitmix64 finalizer over the combined key
    let mut z = seed
        .wrapping_add(channel.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(tick.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Equipment state in force during `tick`, before that tick's transitions.
fn state_before(sc: &EquipmentScenario, tick: u64) -> EquipmentState {
    sc.scheduled_events
        .iter()
        .take_while(|e| e.at_tick < tick)
        .fold(sc.base_state, |s, e| match e.kind {
            ScheduledKind::StateTransition { to } => to,
            _ => s,
        })
}

/// Process value of channel `index` at `tick`.
pub fn pv_value(sc: &EquipmentScenario, index: usize, tick: u64) -> f64 {
    let ch = &sc.pv_channels[index];
    let steps: f64 = sc
        .scheduled_events
        .iter()
        .take_while(|e| e.at_tick <= tick)
        .filter_map(|e| match &e.kind {
            ScheduledKind::PvStep { channel, delta } if *channel == ch.name => Some(*delta),
            _ => None,
        })
        .sum();
    let noise = if ch.noise_stddev > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(sc.seed, index as u64, tick));
        Normal::new(0.0, ch.noise_stddev)
            .expect("validated stddev")
            .sample(&mut rng)
    } else {
        0.0
    };
    ch.nominal + ch.drift_per_tick * tick as f64 + steps + noise
}

/// Events of one tick: the periodic report, then state transitions, then
/// alarms, all stamped with the tick time.
pub fn tick(sc: &EquipmentScenario, tick: u64) -> Vec<TelemetryEvent> {
    let ts = sc.tick_time_ms(tick);
    let event = |kind| TelemetryEvent {
        timestamp_ms: ts,
        equipment_id: sc.equipment_id.clone(),
        kind,
    };
    let mut out = vec![event(EventKind::EventReport {
        ceid: sc.ceid,
        pv_values: sc
            .pv_channels
            .iter()
            .enumerate()
            .map(|(i, c)| (c.name.clone(), pv_value(sc, i, tick)))
            .collect(),
    })];
    let mut state = state_before(sc, tick);
    let mut alarms = Vec::new();
    for e in sc.scheduled_events.iter().filter(|e| e.at_tick == tick) {
        match &e.kind {
            ScheduledKind::StateTransition { to } => {
                out.push(event(EventKind::StateTransition { from: state, to: *to }));
                state = *to;
            }
            ScheduledKind::Alarm { alarm_id, text } => alarms.push(event(EventKind::Alarm {
                alarm_id: *alarm_id,
                set: true,
                text: text.clone(),
            })),
            ScheduledKind::AlarmClear { alarm_id } => {
                let text = alarm_text(sc, *alarm_id);
                alarms.push(event(EventKind::Alarm {
                    alarm_id: *alarm_id,
                    set: false,
                    text,
                }))
            }
            ScheduledKind::PvStep { .. } => {}
        }
    }
    out.extend(alarms);
    out
}

fn alarm_text(sc: &EquipmentScenario, id: u32) -> String {
    sc.scheduled_events
        .iter()
        .find_map(|e| match &e.kind {
            ScheduledKind::Alarm { alarm_id, text } if *alarm_id == id => Some(text.clone()),
            _ => None,
        })
        .unwrap_or_default()
}

/// Messages the equipment emits for ticks `0..ticks`, in order. DATAID is the
/// tick index.
pub fn emitted_messages(sc: &EquipmentScenario, ticks: u64) -> Vec<SecsMessage> {
    (0..ticks)
        .flat_map(|t| tick(sc, t).into_iter().map(move |e| e.to_message(t as u32)))
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum SimulateError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("tick {tick}: wire round trip failed: {reason}")]
    Codec { tick: u64, reason: String },
}

/// Run the whole scenario offline, pushing every event through its SECS-II
/// encoding and back before appending it to `log`. Returns the event count.
pub fn simulate_into(sc: &EquipmentScenario, log: &TelemetryLog) -> Result<usize, SimulateError> {
    let channels = sc.channel_names();
    let mut count = 0;
    for t in 0..sc.ticks {
        let ts = sc.tick_time_ms(t);
        for ev in tick(sc, t) {
            let msg = ev.to_message(t as u32);
            let codec = |reason: String| SimulateError::Codec { tick: t, reason };
            let bytes = msg.encode_body().map_err(|e| codec(e.to_string()))?;
            let (body, _) = decode_item(&bytes).map_err(|e| codec(e.to_string()))?;
            let wire = SecsMessage::raw(msg.stream, msg.function, msg.wait_bit, Some(body));
            let back = TelemetryEvent::from_message(&wire, &sc.equipment_id, &channels, ts)
                .map_err(|e| codec(e.to_string()))?;
            log.append(back)?;
            count += 1;
        }
    }
    Ok(count)
}
