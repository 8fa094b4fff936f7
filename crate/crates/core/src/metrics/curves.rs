use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub precision: f64,
    pub recall: f64,
}

/// ROC and precision-recall curves over one threshold sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPr {
    /// One point per unique score, thresholds strictly decreasing. The
    /// implicit origin `(fpr, tpr) = (0, 0)` is not listed.
    pub points: Vec<CurvePoint>,
    pub auroc: f64,
    pub average_precision: f64,
    pub n_positive: usize,
    pub n_negative: usize,
}

impl RocPr {
    /// `(fpr, tpr)` pairs including the origin.
    pub fn roc(&self) -> Vec<(f64, f64)> {
        std::iter::once((0.0, 0.0))
            .chain(self.points.iter().map(|p| (p.fpr, p.tpr)))
            .collect()
    }

    /// `(recall, precision)` pairs.
    pub fn pr(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.recall, p.precision)).collect()
    }
}

/// Sweep thresholds over unique scores (descending). A case is called positive
/// when its score is `>=` the threshold, so tied scores enter together.
pub fn roc_pr(scores: &[(f64, bool)]) -> Result<RocPr> {
    if scores.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::Validation("scores must be finite".into()));
    }
    let n_pos = scores.iter().filter(|(_, y)| *y).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Degenerate(format!(
            "ROC needs both classes ({n_pos} positive, {n_neg} negative)"
        )));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = Vec::new();
    let mut counts = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == threshold {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        counts.push((tp, fp));
        let recall = tp as f64 / n_pos as f64;
        points.push(CurvePoint {
            threshold,
            tpr: recall,
            fpr: fp as f64 / n_neg as f64,
            precision: tp as f64 / (tp + fp) as f64,
            recall,
        });
    }

    // Trapezoid area accumulated in integer units of 1 / (2 * n_pos * n_neg).
    let mut area2 = 0u128;
    let mut average_precision = 0.0;
    let (mut prev_tp, mut prev_fp, mut prev_recall) = (0u128, 0u128, 0.0);
    for (p, &(tp, fp)) in points.iter().zip(&counts) {
        let (tp, fp) = (tp as u128, fp as u128);
        area2 += (fp - prev_fp) * (tp + prev_tp);
        average_precision += (p.recall - prev_recall) * p.precision;
        prev_tp = tp;
        prev_fp = fp;
        prev_recall = p.recall;
    }
    let auroc = area2 as f64 / (2 * n_pos as u128 * n_neg as u128) as f64;

    Ok(RocPr {
        points,
        auroc,
        average_precision,
        n_positive: n_pos,
        n_negative: n_neg,
    })
}
