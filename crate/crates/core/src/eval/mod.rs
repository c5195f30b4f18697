//! Classification and slot-filling metrics, plus the confidence-based
//! mismatch detector.

mod detect;
mod semer;

pub use detect::{
    confidence_histogram, fit_threshold_detector, roc_area, ConfidenceHistogram, DetectorQuality, ThresholdDetector,
    BINS,
};
pub use semer::{delta_sem, semer, SemERCounts, SemERReport, SlotSet};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

/// Per-class true positive, false positive and false negative counts.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfusionTally {
    pub classes: BTreeMap<String, ClassCounts>,
}

impl ConfusionTally {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, gold: &str, predicted: &str) {
        if gold == predicted {
            self.classes.entry(gold.to_string()).or_default().tp += 1;
        } else {
            self.classes.entry(gold.to_string()).or_default().fn_ += 1;
            self.classes.entry(predicted.to_string()).or_default().fp += 1;
        }
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut t = Self::new();
        for (g, p) in pairs {
            t.record(g, p);
        }
        t
    }

    pub fn totals(&self) -> ClassCounts {
        self.classes.values().fold(ClassCounts::default(), |a, c| ClassCounts {
            tp: a.tp + c.tp,
            fp: a.fp + c.fp,
            fn_: a.fn_ + c.fn_,
        })
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(c: &ClassCounts) -> f64 {
    let p = ratio(c.tp, c.tp + c.fp);
    let r = ratio(c.tp, c.tp + c.fn_);
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// `(micro, macro)` F1 as percentages. Macro averages over every class seen
/// in references or predictions.
pub fn f1_scores(tally: &ConfusionTally) -> Result<(f64, f64)> {
    let total = tally.totals();
    if total.tp + total.fn_ == 0 {
        return Err(EvalError::Contract("F1 of a tally without reference items".into()));
    }
    let micro = 100.0 * f1(&total);
    let macro_ = 100.0 * tally.classes.values().map(f1).sum::<f64>() / tally.classes.len() as f64;
    Ok((micro, macro_))
}

/// Relative change in error (percent) of an experiment against a baseline,
/// both given as F1 percentages. Negative is better.
pub fn delta_err(f1_experiment: f64, f1_baseline: f64) -> Result<f64> {
    for v in [f1_experiment, f1_baseline] {
        if !(0.0..=100.0).contains(&v) {
            return Err(EvalError::Contract(format!("F1 {v} outside [0, 100]")));
        }
    }
    let base_err = 100.0 - f1_baseline;
    if base_err == 0.0 {
        return Err(EvalError::Undefined(
            "baseline F1 is 100; relative error change undefined".into(),
        ));
    }
    Ok(100.0 * ((100.0 - f1_experiment) - base_err) / base_err)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitKind {
    Full,
    Mismatched,
}

impl SplitKind {
    pub fn name(self) -> &'static str {
        match self {
            SplitKind::Full => "full",
            SplitKind::Mismatched => "mismatched",
        }
    }
}

/// F1 of one model on one split, with Δerr against a named baseline when
/// available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub split: SplitKind,
    pub n: usize,
    pub f1_micro: f64,
    pub f1_macro: f64,
    pub baseline: Option<String>,
    pub delta_err_micro: Option<f64>,
    pub delta_err_macro: Option<f64>,
}

impl MetricsReport {
    pub fn new(model: &str, split: SplitKind, tally: &ConfusionTally) -> Result<Self> {
        let (f1_micro, f1_macro) = f1_scores(tally)?;
        let t = tally.totals();
        Ok(MetricsReport {
            model: model.to_string(),
            split,
            n: (t.tp + t.fn_) as usize,
            f1_micro,
            f1_macro,
            baseline: None,
            delta_err_micro: None,
            delta_err_macro: None,
        })
    }

    /// Fills the Δerr columns; a perfect baseline leaves them undefined.
    pub fn against(mut self, baseline: &MetricsReport) -> Self {
        self.baseline = Some(baseline.model.clone());
        self.delta_err_micro = delta_err(self.f1_micro, baseline.f1_micro).ok();
        self.delta_err_macro = delta_err(self.f1_macro, baseline.f1_macro).ok();
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn two_class_hand_example() {
        let mut t = ConfusionTally::new();
        t.classes.insert("A".into(), ClassCounts { tp: 2, fp: 1, fn_: 0 });
        t.classes.insert("B".into(), ClassCounts { tp: 1, fp: 0, fn_: 1 });
        let (mi, ma) = f1_scores(&t).unwrap();
        assert!(close(mi, 75.0));
        assert!(close(ma, (80.0 + 200.0 / 3.0) / 2.0));
        assert!((ma - 73.33).abs() < 0.005);
    }

    #[test]
    fn perfect_single_class_and_empty() {
        let t = ConfusionTally::from_pairs([("A", "A"), ("A", "A")]);
        assert_eq!(f1_scores(&t).unwrap(), (100.0, 100.0));
        let t = ConfusionTally::from_pairs([("A", "A"), ("A", "B"), ("B", "B")]);
        assert!(f1_scores(&t).unwrap().0 > 0.0);
        assert!(f1_scores(&ConfusionTally::new()).is_err());
    }

    #[test]
    fn delta_err_cases() {
        assert!(close(delta_err(92.8, 90.0).unwrap(), -28.0));
        assert_eq!(delta_err(85.0, 85.0).unwrap(), 0.0);
        assert!(close(delta_err(100.0, 70.0).unwrap(), -100.0));
        assert!(matches!(delta_err(90.0, 100.0), Err(EvalError::Undefined(_))));
    }
}
