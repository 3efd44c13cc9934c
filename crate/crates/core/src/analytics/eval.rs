use std::fmt::Write;

use serde::Serialize;

use super::mlp::{MlpError, MlpModel};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Metrics from parallel truth/prediction label lists. Undefined precision or
/// recall counts as zero.
pub fn metrics_from_predictions(class_names: &[String], truth: &[usize], predicted: &[usize]) -> EvalReport {
    let k = class_names.len();
    let mut confusion = vec![vec![0usize; k]; k];
    for (&t, &p) in truth.iter().zip(predicted) {
        confusion[t][p] += 1;
    }
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = confusion[c][c];
            let predicted_c: usize = (0..k).map(|t| confusion[t][c]).sum();
            let support: usize = confusion[c].iter().sum();
            let precision = ratio(tp, predicted_c);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                class: class_names[c].clone(),
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k.max(1) as f64;
    let correct = (0..k).map(|c| confusion[c][c]).sum();
    EvalReport {
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        accuracy: ratio(correct, truth.len()),
        correct,
        total: truth.len(),
        per_class,
        confusion,
    }
}

pub fn evaluate(model: &MlpModel, features: &[Vec<f64>], labels: &[usize]) -> Result<EvalReport, MlpError> {
    let predicted = features
        .iter()
        .map(|f| model.predict(f).map(|p| p.class_index))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(metrics_from_predictions(&model.class_names, labels, &predicted))
}

impl EvalReport {
    pub fn render_text(&self) -> String {
        let width = self.per_class.iter().map(|m| m.class.len()).max().unwrap_or(0).max(12);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>6}  {:>6}  {:>7}",
            "Defect Class", "Prec.", "Recall", "F1", "Support"
        );
        let _ = writeln!(out, "{}", "-".repeat(width + 34));
        for m in &self.per_class {
            let _ = writeln!(
                out,
                "{:<width$}  {:>6.3}  {:>6.3}  {:>6.3}  {:>7}",
                m.class, m.precision, m.recall, m.f1, m.support
            );
        }
        let _ = writeln!(out, "{}", "-".repeat(width + 34));
        let _ = writeln!(
            out,
            "{:<width$}  {:>6.3}  {:>6.3}  {:>6.3}  {:>7}",
            "Macro avg.", self.macro_precision, self.macro_recall, self.macro_f1, self.total
        );
        let _ = writeln!(
            out,
            "{:<width$}  {:.1}% ({}/{})",
            "Overall acc.",
            self.accuracy * 100.0,
            self.correct,
            self.total
        );
        out
    }
}
