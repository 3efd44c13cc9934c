//! Change detection on one process-value channel.
//!
//! Two models are fitted to the window: the best two-segment constant fit
//! (segments of at least four samples) and an ordinary least-squares line. The
//! one with the smaller squared error is tested: a step scores
//! `|mean2 - mean1| / pooled sd`, a drift `|slope| * span / residual sd`.
//! Residuals of that model beyond `max(threshold, sqrt(2 ln n) + 1)` sds are
//! reported as out-of-band samples.

use serde::{Deserialize, Serialize};

use super::event::TelemetryEvent;
use super::store::TelemetryLog;

pub const DEFAULT_THRESHOLD: f64 = 3.0;
pub const MIN_SAMPLES: usize = 8;
const MIN_SEGMENT: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    Step,
    Drift,
    OutOfBand,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PvAnomaly {
    pub equipment_id: String,
    pub channel: String,
    pub window_start_ms: i64,
    pub window_end_ms: i64,
    pub kind: AnomalyKind,
    /// Signed size in channel units.
    pub magnitude: f64,
    pub z_score: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AnomalyScan {
    pub anomalies: Vec<PvAnomaly>,
    pub diagnostic: Option<String>,
}

/// Samples of `channel` from report events, in event order.
pub fn channel_series(events: &[TelemetryEvent], channel: &str) -> Vec<(i64, f64)> {
    events
        .iter()
        .filter_map(|e| {
            e.pv_values()
                .and_then(|pv| pv.get(channel))
                .map(|v| (e.timestamp_ms, *v))
        })
        .collect()
}

pub fn detect_anomalies(
    log: &TelemetryLog,
    equipment_id: &str,
    channel: &str,
    start_ms: i64,
    end_ms: i64,
    threshold: f64,
) -> AnomalyScan {
    let events = log.query_window(equipment_id, start_ms, end_ms);
    detect_series(equipment_id, channel, &channel_series(&events, channel), threshold)
}

pub fn detect_series(equipment_id: &str, channel: &str, samples: &[(i64, f64)], threshold: f64) -> AnomalyScan {
    let n = samples.len();
    if n < MIN_SAMPLES {
        return AnomalyScan {
            anomalies: Vec::new(),
            diagnostic: Some(format!("{channel}: {n} samples, need at least {MIN_SAMPLES}")),
        };
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let sst: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    let sd_total = (sst / nf).sqrt();
    if sd_total == 0.0 || !sd_total.is_finite() {
        return AnomalyScan {
            anomalies: Vec::new(),
            diagnostic: Some(format!("{channel}: zero variance")),
        };
    }
    let floor = 1e-6 * sd_total;
    let make = |kind, start, end, magnitude: f64, z: f64| PvAnomaly {
        equipment_id: equipment_id.to_string(),
        channel: channel.to_string(),
        window_start_ms: start,
        window_end_ms: end,
        kind,
        magnitude,
        z_score: z,
    };

    // Best split: first index of the second segment.
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + (xs[i] - mean);
    }
    let mut best_split = MIN_SEGMENT;
    let mut best_gain = f64::NEG_INFINITY;
    for k in MIN_SEGMENT..=n - MIN_SEGMENT {
        let (s1, s2) = (prefix[k], prefix[n] - prefix[k]);
        let gain = s1 * s1 / k as f64 + s2 * s2 / (n - k) as f64;
        if gain > best_gain {
            best_gain = gain;
            best_split = k;
        }
    }
    let sse_step = (sst - best_gain).max(0.0);

    let t0 = samples[0].0;
    let ts: Vec<f64> = samples.iter().map(|s| (s.0 - t0) as f64 / 1000.0).collect();
    let tmean = ts.iter().sum::<f64>() / nf;
    let sxx: f64 = ts.iter().map(|t| (t - tmean).powi(2)).sum();
    let sxy: f64 = ts.iter().zip(&xs).map(|(t, x)| (t - tmean) * (x - mean)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let sse_line = (sst - slope * sxy).max(0.0);

    let mut anomalies = Vec::new();
    let residuals: Vec<f64>;
    let sd_model;
    if sse_step < sse_line {
        let k = best_split;
        let m1 = mean + prefix[k] / k as f64;
        let m2 = mean + (prefix[n] - prefix[k]) / (n - k) as f64;
        sd_model = (sse_step / (nf - 2.0)).sqrt().max(floor);
        let z = (m2 - m1).abs() / sd_model;
        if z >= threshold {
            let t = samples[k].0;
            anomalies.push(make(AnomalyKind::Step, t, t, m2 - m1, z));
        }
        residuals = xs
            .iter()
            .enumerate()
            .map(|(i, x)| x - if i < k { m1 } else { m2 })
            .collect();
    } else {
        sd_model = (sse_line / (nf - 2.0)).sqrt().max(floor);
        let span = ts[n - 1] - ts[0];
        let z = slope.abs() * span / sd_model;
        if z >= threshold {
            anomalies.push(make(
                AnomalyKind::Drift,
                samples[0].0,
                samples[n - 1].0,
                slope * span,
                z,
            ));
        }
        residuals = xs
            .iter()
            .zip(&ts)
            .map(|(x, t)| x - (mean + slope * (t - tmean)))
            .collect();
    }

    let band = threshold.max((2.0 * nf.ln()).sqrt() + 1.0);
    for (i, r) in residuals.iter().enumerate() {
        let z = r.abs() / sd_model;
        if z >= band {
            let t = samples[i].0;
            anomalies.push(make(AnomalyKind::OutOfBand, t, t, *r, z));
        }
    }
    AnomalyScan {
        anomalies,
        diagnostic: None,
    }
}
