use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::GaitLabel;

/// Binary confusion counts with Abnormal as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn from_predictions(truth: &[GaitLabel], predicted: &[GaitLabel]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                actual: predicted.len(),
            });
        }
        let mut cm = Self::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.record(t, p);
        }
        Ok(cm)
    }

    pub fn record(&mut self, truth: GaitLabel, predicted: GaitLabel) {
        use GaitLabel::*;
        match (truth, predicted) {
            (Abnormal, Abnormal) => self.tp += 1,
            (Normal, Abnormal) => self.fp += 1,
            (Abnormal, Normal) => self.fn_ += 1,
            (Normal, Normal) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn merge(&self, other: &Self) -> Self {
        Self {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
            tn: self.tn + other.tn,
        }
    }
}

/// Precision, recall, and F1 for one class. A zero denominator yields 0 and
/// sets the matching `*_undefined` flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

impl ClassMetrics {
    fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let ratio = |num: u64, den: u64| {
            if den == 0 {
                (0.0, true)
            } else {
                (num as f64 / den as f64, false)
            }
        };
        let (precision, precision_undefined) = ratio(tp, tp + fp);
        let (recall, recall_undefined) = ratio(tp, tp + fn_);
        let (f1, f1_undefined) = if precision + recall > 0.0 {
            (2.0 * precision * recall / (precision + recall), false)
        } else {
            (0.0, true)
        };
        Self {
            precision,
            recall,
            f1,
            precision_undefined,
            recall_undefined,
            f1_undefined,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub normal: ClassMetrics,
    pub abnormal: ClassMetrics,
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("cannot compute metrics of an empty confusion matrix"));
    }
    Ok(Metrics {
        accuracy: (cm.tp + cm.tn) as f64 / total as f64,
        abnormal: ClassMetrics::from_counts(cm.tp, cm.fp, cm.fn_),
        // Normal as the positive class: tn are its hits, fn its false alarms
        normal: ClassMetrics::from_counts(cm.tn, cm.fn_, cm.fp),
    })
}
