//! Confusion-matrix metrics and ROC analysis.
//!
//! Zero denominators yield 0: precision with no positive predictions,
//! recall and FNR with no positive labels, FPR with no negative labels, and
//! F1 when precision and recall are both 0.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn from_predictions(pred: &[bool], labels: &[bool]) -> Confusion {
        let mut c = Confusion::default();
        for (&p, &l) in pred.iter().zip(labels) {
            match (p, l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Present when scores were available.
    pub auc: Option<f64>,
    pub confusion: Confusion,
    pub fpr: f64,
    pub fnr: f64,
}

impl MetricsRecord {
    pub fn from_confusion(c: Confusion) -> Self {
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        MetricsRecord {
            accuracy: ratio(c.tp + c.tn, c.total()),
            precision,
            recall,
            f1,
            auc: None,
            confusion: c,
            fpr: ratio(c.fp, c.fp + c.tn),
            fnr: ratio(c.fn_, c.tp + c.fn_),
        }
    }
}

pub fn compute_metrics(pred: &[bool], labels: &[bool]) -> Result<MetricsRecord> {
    if pred.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: labels.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(MetricsRecord::from_confusion(Confusion::from_predictions(
        pred, labels,
    )))
}

/// Metrics of thresholded confidences, with AUC when both classes occur.
pub fn compute_scored_metrics(
    confidence: &[f64],
    labels: &[bool],
    threshold: f64,
) -> Result<MetricsRecord> {
    let pred: Vec<bool> = confidence.iter().map(|&c| c >= threshold).collect();
    let mut m = compute_metrics(&pred, labels)?;
    m.auc = roc_auc(confidence, labels).ok().map(|r| r.auc);
    Ok(m)
}

pub fn f1_score(pred: &[bool], labels: &[bool]) -> f64 {
    MetricsRecord::from_confusion(Confusion::from_predictions(pred, labels)).f1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0,0)` to `(1,1)`.
    pub points: Vec<(f64, f64)>,
    /// Score threshold reached at each point after the first.
    pub thresholds: Vec<f64>,
    pub auc: f64,
}

/// Sweeps the threshold down through the distinct scores; tied scores move
/// the curve in one diagonal step. AUC by trapezoid.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = alloc::vec![(0.0, 0.0)];
    let mut thresholds = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut auc2 = 0u128; // twice the area in units of 1/(pos*neg)
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        auc2 += ((fp - fp0) as u128) * ((tp + tp0) as u128);
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        thresholds.push(s);
    }
    Ok(RocCurve {
        points,
        thresholds,
        auc: auc2 as f64 / (2.0 * pos as f64 * neg as f64),
    })
}
