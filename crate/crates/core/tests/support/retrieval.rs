//! Brute-force retrieval oracle.
#![allow(dead_code)]

use fa_core::index::DefectCase;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 0.0).then(|| v.iter().map(|x| x / n).collect())
}

/// Normalize-then-dot similarity, zero vectors scoring 0.
pub fn oracle_similarity(a: &[f64], b: &[f64]) -> f64 {
    match (unit(a), unit(b)) {
        (Some(a), Some(b)) => a.iter().zip(&b).map(|(x, y)| x * y).sum(),
        _ => 0.0,
    }
}

/// Full sort with similarities quantized so rounding noise cannot reorder
/// genuine ties.
pub fn oracle_top_k(cases: &[DefectCase], q: &[f64], k: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(i64, String, f64)> = cases
        .iter()
        .map(|c| {
            let s = oracle_similarity(q, &c.embedding);
            ((s * 1e9).round() as i64, c.case_id.clone(), s)
        })
        .collect();
    all.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, id, s)| (id, s)).collect()
}

pub fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    match rng.random_range(0..10) {
        // small integers make exact ties and collinear vectors common
        0..=3 => (0..dim).map(|_| rng.random_range(-2i32..=2) as f64).collect(),
        _ => (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
    }
}
