//! Confusion-matrix metrics and mask overlap scores.
//!
//! Undefined metrics (zero denominators) are reported as
//! [`MetricError::Undefined`] and rendered as `NaN` in CSV output.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("{0} is undefined: zero denominator")]
    Undefined(&'static str),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no samples")]
    Empty,
    #[error("line {line}: cannot parse label {text:?}")]
    Parse { line: usize, text: String },
}

/// Which formula `recall` uses. `PaperLiteral` is `tn / (fn + tn)`, which is
/// specificity under the usual naming.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecallMode {
    #[default]
    Standard,
    PaperLiteral,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// One-vs-rest counts for `class`.
    pub fn one_vs_rest(predictions: &[usize], truth: &[usize], class: usize) -> Result<Self, MetricError> {
        if predictions.len() != truth.len() {
            return Err(MetricError::LengthMismatch(predictions.len(), truth.len()));
        }
        let mut c = Self::default();
        for (&p, &t) in predictions.iter().zip(truth) {
            match (p == class, t == class) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }
}

fn ratio(num: u64, den: u64, name: &'static str) -> Result<f64, MetricError> {
    if den == 0 {
        Err(MetricError::Undefined(name))
    } else {
        Ok(num as f64 / den as f64)
    }
}

pub fn precision(c: &ConfusionCounts) -> Result<f64, MetricError> {
    ratio(c.tp, c.tp + c.fp, "precision")
}

pub fn recall(c: &ConfusionCounts, mode: RecallMode) -> Result<f64, MetricError> {
    match mode {
        RecallMode::Standard => ratio(c.tp, c.tp + c.fn_, "recall"),
        RecallMode::PaperLiteral => ratio(c.tn, c.tn + c.fn_, "recall"),
    }
}

pub fn accuracy(c: &ConfusionCounts) -> Result<f64, MetricError> {
    ratio(c.tp + c.tn, c.total(), "accuracy")
}

/// Harmonic mean of precision and recall; 0 when either is 0.
pub fn f1(c: &ConfusionCounts, mode: RecallMode) -> Result<f64, MetricError> {
    let p = precision(c)?;
    let r = recall(c, mode)?;
    if p == 0.0 || r == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * p * r / (p + r))
}

/// `2|A n B| / (|A| + |B|)`, 1 when both masks are empty.
pub fn dice(a: &[bool], b: &[bool]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    let (mut inter, mut sa, mut sb) = (0u64, 0u64, 0u64);
    for (&x, &y) in a.iter().zip(b) {
        inter += (x && y) as u64;
        sa += x as u64;
        sb += y as u64;
    }
    if sa + sb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (sa + sb) as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassMetrics {
    pub class: usize,
    pub counts: ConfusionCounts,
    pub precision: Result<f64, MetricError>,
    pub recall_standard: Result<f64, MetricError>,
    pub recall_paper: Result<f64, MetricError>,
    /// F1 with the standard recall.
    pub f1: Result<f64, MetricError>,
    /// One-vs-rest accuracy `(tp + tn) / total`.
    pub accuracy: Result<f64, MetricError>,
}

impl ClassMetrics {
    fn from_counts(class: usize, counts: ConfusionCounts) -> Self {
        Self {
            class,
            counts,
            precision: precision(&counts),
            recall_standard: recall(&counts, RecallMode::Standard),
            recall_paper: recall(&counts, RecallMode::PaperLiteral),
            f1: f1(&counts, RecallMode::Standard),
            accuracy: accuracy(&counts),
        }
    }
}

/// Per-class one-vs-rest metrics with a macro average. The macro average of
/// each column is the mean over classes where that metric is defined.
#[derive(Clone, Debug, PartialEq)]
pub struct MulticlassReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: Result<f64, MetricError>,
    pub macro_recall_standard: Result<f64, MetricError>,
    pub macro_recall_paper: Result<f64, MetricError>,
    pub macro_f1: Result<f64, MetricError>,
    /// Share of samples on the confusion-matrix diagonal.
    pub overall_accuracy: f64,
}

fn macro_mean(values: impl Iterator<Item = Result<f64, MetricError>>, name: &'static str) -> Result<f64, MetricError> {
    let defined: Vec<f64> = values.filter_map(Result::ok).collect();
    if defined.is_empty() {
        return Err(MetricError::Undefined(name));
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}

impl MulticlassReport {
    /// Classes are the union of labels seen in either sequence.
    pub fn from_labels(predictions: &[usize], truth: &[usize]) -> Result<Self, MetricError> {
        if predictions.len() != truth.len() {
            return Err(MetricError::LengthMismatch(predictions.len(), truth.len()));
        }
        if truth.is_empty() {
            return Err(MetricError::Empty);
        }
        let classes: BTreeSet<usize> = predictions.iter().chain(truth).copied().collect();
        let per_class: Vec<ClassMetrics> = classes
            .into_iter()
            .map(|k| ConfusionCounts::one_vs_rest(predictions, truth, k).map(|c| ClassMetrics::from_counts(k, c)))
            .collect::<Result<_, _>>()?;
        let correct = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
        Ok(Self {
            macro_precision: macro_mean(per_class.iter().map(|m| m.precision.clone()), "precision"),
            macro_recall_standard: macro_mean(per_class.iter().map(|m| m.recall_standard.clone()), "recall"),
            macro_recall_paper: macro_mean(per_class.iter().map(|m| m.recall_paper.clone()), "recall"),
            macro_f1: macro_mean(per_class.iter().map(|m| m.f1.clone()), "f1"),
            overall_accuracy: correct as f64 / truth.len() as f64,
            per_class,
        })
    }

    /// `class,precision,recall_standard,recall_paper,f1,accuracy`, one row per
    /// class then a `macro` row whose accuracy is the overall accuracy.
    pub fn to_csv(&self) -> String {
        fn cell(v: &Result<f64, MetricError>) -> String {
            match v {
                Ok(x) => format!("{x:.6}"),
                Err(_) => "NaN".into(),
            }
        }
        let mut out = String::from("class,precision,recall_standard,recall_paper,f1,accuracy\n");
        for m in &self.per_class {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                m.class,
                cell(&m.precision),
                cell(&m.recall_standard),
                cell(&m.recall_paper),
                cell(&m.f1),
                cell(&m.accuracy)
            );
        }
        let _ = writeln!(
            out,
            "macro,{},{},{},{},{:.6}",
            cell(&self.macro_precision),
            cell(&self.macro_recall_standard),
            cell(&self.macro_recall_paper),
            cell(&self.macro_f1),
            self.overall_accuracy
        );
        out
    }
}

/// Reads one integer label per line. Blank lines and a non-numeric first line
/// (a header) are skipped; for comma-separated rows the last field is the label.
pub fn parse_labels(text: &str) -> Result<Vec<usize>, MetricError> {
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let field = line.rsplit(',').next().unwrap_or(line).trim();
        match field.parse::<usize>() {
            Ok(v) => labels.push(v),
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(MetricError::Parse {
                    line: i + 1,
                    text: field.to_string(),
                })
            }
        }
    }
    Ok(labels)
}
