use std::fmt;

use serde::{Deserialize, Serialize};

/// Binary confusion counts; the positive class is "influential".
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = ConfusionCounts::default();
        for (predicted, actual) in pairs {
            c.record(predicted, actual);
        }
        c
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn merge(self, other: Self) -> Self {
        ConfusionCounts {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
            fn_: self.fn_ + other.fn_,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: ConfusionCounts,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    pub fn from_counts(c: ConfusionCounts) -> Self {
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Metrics { accuracy: ratio(c.tp + c.tn, c.total()), precision, recall, f1, counts: c }
    }
}

/// One row of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub metrics: Metrics,
}

/// Published figures for the full attention-fusion model on the original
/// restaurant corpus, shown for orientation only.
pub const PUBLISHED_REFERENCE: (&str, [f64; 4]) = ("BERT_All (published)", [0.878, 0.682, 0.635, 0.657]);

/// Fixed-width table with one line per method and a trailing reference line.
pub struct MetricsTable<'a>(pub &'a [MetricsRow]);

impl fmt::Display for MetricsTable<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<24} {:>9} {:>9} {:>9} {:>9}", "Method", "Accuracy", "Precision", "Recall", "F1 score")?;
        for row in self.0 {
            let m = &row.metrics;
            writeln!(
                f,
                "{:<24} {:>9.3} {:>9.3} {:>9.3} {:>9.3}",
                row.method, m.accuracy, m.precision, m.recall, m.f1
            )?;
        }
        let (name, [a, p, r, f1]) = PUBLISHED_REFERENCE;
        writeln!(f, "{name:<24} {a:>9.3} {p:>9.3} {r:>9.3} {f1:>9.3}")
    }
}
