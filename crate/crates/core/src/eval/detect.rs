use serde::{Deserialize, Serialize};

use super::{EvalError, Result};
use crate::corpus::NBestRecord;

pub const BINS: usize = 20;

fn bin(score: f64) -> usize {
    ((score * BINS as f64).floor().max(0.0) as usize).min(BINS - 1)
}

/// Mean-confidence histograms for the full set and its mismatched subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceHistogram {
    pub edges: Vec<f64>,
    pub full: Vec<usize>,
    pub mismatched: Vec<usize>,
    pub mean_full: f64,
    pub mean_mismatched: Option<f64>,
    /// Largest gap between the two empirical CDFs.
    pub ks: Option<f64>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut best) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        best = best.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    best
}

pub fn confidence_histogram(records: &[NBestRecord]) -> Result<ConfidenceHistogram> {
    if records.is_empty() {
        return Err(EvalError::Contract("histogram of an empty record set".into()));
    }
    let scores: Vec<(f64, bool)> = records
        .iter()
        .map(|r| (r.nbest.mean_confidence(), r.is_mismatched()))
        .collect();
    let mut full = vec![0; BINS];
    let mut mismatched = vec![0; BINS];
    for &(s, m) in &scores {
        full[bin(s)] += 1;
        if m {
            mismatched[bin(s)] += 1;
        }
    }
    let all: Vec<f64> = scores.iter().map(|s| s.0).collect();
    let mm: Vec<f64> = scores.iter().filter(|s| s.1).map(|s| s.0).collect();
    Ok(ConfidenceHistogram {
        edges: (0..=BINS).map(|k| k as f64 / BINS as f64).collect(),
        full,
        mismatched,
        mean_full: mean(&all).expect("nonempty"),
        mean_mismatched: mean(&mm),
        ks: (!mm.is_empty()).then(|| ks_statistic(&all, &mm)),
    })
}

/// Area under the ROC curve for "lower score means mismatched"; ties count
/// one half.
pub fn roc_area(scores: &[f64], mismatched: &[bool]) -> Result<f64> {
    let pos: Vec<f64> = scores.iter().zip(mismatched).filter(|p| *p.1).map(|p| *p.0).collect();
    let mut neg: Vec<f64> = scores.iter().zip(mismatched).filter(|p| !*p.1).map(|p| *p.0).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(EvalError::Degenerate("ROC area needs both classes".into()));
    }
    neg.sort_by(f64::total_cmp);
    let mut wins = 0.0;
    for p in &pos {
        let above = neg.len() - neg.partition_point(|n| n <= p);
        let ties = neg.partition_point(|n| n <= p) - neg.partition_point(|n| n < p);
        wins += above as f64 + 0.5 * ties as f64;
    }
    Ok(wins / (pos.len() * neg.len()) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDetector {
    pub threshold: f64,
    pub youden_j: f64,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorQuality {
    pub n: usize,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub roc_area: f64,
}

fn rates(threshold: f64, scores: &[f64], flags: &[bool]) -> (f64, f64) {
    let (mut tp, mut p, mut tn, mut n) = (0, 0, 0, 0);
    for (&s, &m) in scores.iter().zip(flags) {
        let hit = s < threshold;
        if m {
            p += 1;
            tp += hit as usize;
        } else {
            n += 1;
            tn += (!hit) as usize;
        }
    }
    (tp as f64 / p as f64, tn as f64 / n as f64)
}

impl ThresholdDetector {
    pub fn is_mismatched(&self, score: f64) -> bool {
        score < self.threshold
    }

    pub fn evaluate(&self, scores: &[f64], flags: &[bool]) -> Result<DetectorQuality> {
        let roc_area = roc_area(scores, flags)?;
        let (sensitivity, specificity) = rates(self.threshold, scores, flags);
        let correct = scores
            .iter()
            .zip(flags)
            .filter(|(s, m)| self.is_mismatched(**s) == **m)
            .count();
        Ok(DetectorQuality {
            n: scores.len(),
            accuracy: correct as f64 / scores.len() as f64,
            sensitivity,
            specificity,
            roc_area,
        })
    }
}

/// Picks the threshold with the largest Youden's J among midpoints between
/// consecutive distinct scores and the two outer cuts; the lowest wins ties.
pub fn fit_threshold_detector(scores: &[f64], mismatched: &[bool]) -> Result<ThresholdDetector> {
    if scores.len() != mismatched.len() {
        return Err(EvalError::Contract("scores and flags differ in length".into()));
    }
    if !mismatched.iter().any(|&m| m) || mismatched.iter().all(|&m| m) {
        return Err(EvalError::Degenerate("validation flags are all equal".into()));
    }
    let mut distinct = scores.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut candidates = vec![distinct[0]];
    candidates.extend(distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    candidates.push(f64::INFINITY);
    let mut best = (f64::NEG_INFINITY, 0.0);
    for t in candidates {
        let (sens, spec) = rates(t, scores, mismatched);
        let j = sens + spec - 1.0;
        if j > best.0 + 1e-12 {
            best = (j, t);
        }
    }
    let (youden_j, threshold) = best;
    let warning = (youden_j <= 1e-12).then(|| "confidence does not separate mismatched records (J = 0)".to_string());
    Ok(ThresholdDetector {
        threshold,
        youden_j: youden_j.max(0.0),
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_scores() {
        let s = [0.1, 0.2, 0.3, 0.8, 0.9];
        let f = [true, true, true, false, false];
        let d = fit_threshold_detector(&s, &f).unwrap();
        assert_eq!(d.youden_j, 1.0);
        assert!((d.threshold - 0.55).abs() < 1e-12);
        let q = d.evaluate(&s, &f).unwrap();
        assert_eq!((q.accuracy, q.roc_area), (1.0, 1.0));
    }

    #[test]
    fn identical_scores_warn() {
        let d = fit_threshold_detector(&[0.5; 4], &[true, false, true, false]).unwrap();
        assert_eq!(d.youden_j, 0.0);
        assert!(d.warning.is_some());
        assert_eq!(roc_area(&[0.5; 4], &[true, false, true, false]).unwrap(), 0.5);
        assert!(fit_threshold_detector(&[0.5, 0.6], &[true, true]).is_err());
    }

    #[test]
    fn lowering_threshold_never_raises_sensitivity() {
        let s = [0.1, 0.4, 0.35, 0.8, 0.2, 0.6, 0.9, 0.55];
        let f = [true, false, true, false, true, true, false, false];
        let mut last = f64::INFINITY;
        for k in (0..=20).rev() {
            let (sens, _) = rates(k as f64 / 20.0, &s, &f);
            assert!(sens <= last);
            last = sens;
        }
    }

    #[test]
    fn ks_of_identical_samples_is_zero() {
        assert_eq!(ks_statistic(&[0.1, 0.5, 0.9], &[0.9, 0.5, 0.1]), 0.0);
        assert_eq!(ks_statistic(&[0.1, 0.2], &[0.8, 0.9]), 1.0);
    }
}
