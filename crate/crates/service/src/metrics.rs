//! Prometheus text exposition of pipeline latencies and outcomes.

use std::fmt::Write;
use std::sync::Mutex;

use fa_core::pipeline::{FAState, NODES};
use indexmap::IndexMap;

/// Upper bounds in seconds; `+Inf` is implicit.
pub const BUCKETS: [f64; 14] = [
    0.0005, 0.001, 0.0025, 0.005, 0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 1.0, 2.5, 5.0, 10.0,
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Histogram {
    /// Non-cumulative count per bucket, plus one overflow slot.
    counts: [u64; BUCKETS.len() + 1],
    sum: f64,
    count: u64,
}

impl Histogram {
    pub fn observe(&mut self, v: f64) {
        let slot = BUCKETS.iter().position(|b| v <= *b).unwrap_or(BUCKETS.len());
        self.counts[slot] += 1;
        self.sum += v;
        self.count += 1;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn sum(&self) -> f64 {
        self.sum
    }

    /// Cumulative counts aligned with `BUCKETS`, then `+Inf`.
    pub fn cumulative(&self) -> Vec<u64> {
        self.counts
            .iter()
            .scan(0, |acc, c| {
                *acc += c;
                Some(*acc)
            })
            .collect()
    }
}

#[derive(Default)]
struct Inner {
    nodes: IndexMap<String, Histogram>,
    total: Histogram,
    runs: u64,
    errors: IndexMap<String, u64>,
    requests: IndexMap<String, u64>,
}

pub struct Metrics {
    inner: Mutex<Inner>,
}

impl Default for Metrics {
    fn default() -> Self {
        let mut inner = Inner::default();
        for n in NODES {
            inner.nodes.insert(n.to_string(), Histogram::default());
            inner.errors.insert(n.to_string(), 0);
        }
        Metrics {
            inner: Mutex::new(inner),
        }
    }
}

fn escape(label: &str) -> String {
    label.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}

fn write_histogram(out: &mut String, name: &str, labels: &str, h: &Histogram) {
    let sep = if labels.is_empty() { "" } else { "," };
    let cumulative = h.cumulative();
    for (le, c) in BUCKETS
        .iter()
        .map(|b| b.to_string())
        .chain(["+Inf".to_string()])
        .zip(cumulative)
    {
        let _ = writeln!(out, "{name}_bucket{{{labels}{sep}le=\"{le}\"}} {c}");
    }
    let braces = if labels.is_empty() {
        String::new()
    } else {
        format!("{{{labels}}}")
    };
    let _ = writeln!(out, "{name}_sum{braces} {}", h.sum);
    let _ = writeln!(out, "{name}_count{braces} {}", h.count);
}

impl Metrics {
    /// Record one finished pipeline run.
    pub fn record_run(&self, state: &FAState) {
        let mut m = self.inner.lock().expect("metrics lock");
        let mut total = 0.0;
        for (node, secs) in &state.node_latencies {
            m.nodes.entry(node.clone()).or_default().observe(*secs);
            total += secs;
        }
        m.total.observe(total);
        m.runs += 1;
        for e in &state.errors {
            *m.errors.entry(e.node.clone()).or_default() += 1;
        }
    }

    pub fn record_request(&self, route: &str, status: u16) {
        let mut m = self.inner.lock().expect("metrics lock");
        *m.requests.entry(format!("{route}\u{0}{status}")).or_default() += 1;
    }

    pub fn node_histogram(&self, node: &str) -> Option<Histogram> {
        self.inner.lock().expect("metrics lock").nodes.get(node).cloned()
    }

    pub fn runs(&self) -> u64 {
        self.inner.lock().expect("metrics lock").runs
    }

    pub fn render(&self) -> String {
        let m = self.inner.lock().expect("metrics lock");
        let mut out = String::new();
        out.push_str("# HELP fa_node_duration_seconds Wall time spent in each pipeline node.\n");
        out.push_str("# TYPE fa_node_duration_seconds histogram\n");
        for (node, h) in m.nodes.iter() {
            write_histogram(
                &mut out,
                "fa_node_duration_seconds",
                &format!("node=\"{}\"", escape(node)),
                h,
            );
        }
        out.push_str("# HELP fa_pipeline_duration_seconds Summed node time per pipeline run.\n");
        out.push_str("# TYPE fa_pipeline_duration_seconds histogram\n");
        write_histogram(&mut out, "fa_pipeline_duration_seconds", "", &m.total);
        out.push_str("# HELP fa_pipeline_runs_total Completed pipeline runs.\n");
        out.push_str("# TYPE fa_pipeline_runs_total counter\n");
        let _ = writeln!(out, "fa_pipeline_runs_total {}", m.runs);
        out.push_str("# HELP fa_pipeline_errors_total Error entries recorded per node.\n");
        out.push_str("# TYPE fa_pipeline_errors_total counter\n");
        for (node, c) in m.errors.iter() {
            let _ = writeln!(out, "fa_pipeline_errors_total{{node=\"{}\"}} {c}", escape(node));
        }
        out.push_str("# HELP fa_http_requests_total HTTP requests by route and status.\n");
        out.push_str("# TYPE fa_http_requests_total counter\n");
        for (key, c) in m.requests.iter() {
            let (route, status) = key.split_once('\u{0}').unwrap_or((key, ""));
            let _ = writeln!(
                out,
                "fa_http_requests_total{{route=\"{}\",status=\"{status}\"}} {c}",
                escape(route)
            );
        }
        out
    }
}
