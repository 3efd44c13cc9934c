//! Per-node latency summaries.

use indexmap::IndexMap;
use serde::Serialize;

use super::state::NODES;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeLatency {
    pub node: String,
    pub median_s: f64,
    /// Share of the summed node medians, in percent.
    pub fraction_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatencyReport {
    pub runs: usize,
    pub nodes: Vec<NodeLatency>,
    pub total_median_s: f64,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Median seconds and share per node over a set of runs.
pub fn summarize(runs: &[IndexMap<String, f64>]) -> LatencyReport {
    let medians: Vec<(String, f64)> = NODES
        .iter()
        .map(|n| {
            let mut v: Vec<f64> = runs.iter().filter_map(|r| r.get(*n).copied()).collect();
            (n.to_string(), median(&mut v))
        })
        .collect();
    let sum: f64 = medians.iter().map(|m| m.1).sum();
    let mut totals: Vec<f64> = runs.iter().map(|r| r.values().sum()).collect();
    LatencyReport {
        runs: runs.len(),
        nodes: medians
            .into_iter()
            .map(|(node, median_s)| NodeLatency {
                node,
                median_s,
                fraction_pct: if sum > 0.0 { 100.0 * median_s / sum } else { 0.0 },
            })
            .collect(),
        total_median_s: median(&mut totals),
    }
}

impl LatencyReport {
    pub fn render_text(&self) -> String {
        let mut out = format!("{:<20} {:>12} {:>12}\n", "Node", "Median (s)", "Fraction (%)");
        for n in &self.nodes {
            out.push_str(&format!(
                "{:<20} {:>12.6} {:>12.1}\n",
                n.node, n.median_s, n.fraction_pct
            ));
        }
        out.push_str(&format!(
            "{:<20} {:>12.6} {:>12.1}\n",
            "Total", self.total_median_s, 100.0
        ));
        out.push_str(&format!("({} runs)\n", self.runs));
        out
    }
}
