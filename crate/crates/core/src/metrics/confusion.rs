use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::LabelGrid;

/// One-vs-rest confusion counts over voxels or cases.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    /// Class absent from both ground truth and prediction.
    pub fn absent_in_both(&self) -> bool {
        self.tp == 0 && self.fp == 0 && self.fn_ == 0
    }

    /// `2tp / (2tp + fp + fn)`; 1.0 when the class is absent in both.
    pub fn dice(&self) -> f64 {
        if self.absent_in_both() {
            1.0
        } else {
            (2 * self.tp) as f64 / (2 * self.tp + self.fp + self.fn_) as f64
        }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn sensitivity(&self) -> f64 {
        self.recall()
    }

    pub fn specificity(&self) -> f64 {
        ratio(self.tn, self.tn + self.fp)
    }

    /// Harmonic mean of precision and recall, following the Dice convention
    /// when the class is absent in both.
    pub fn f1(&self) -> f64 {
        if self.absent_in_both() {
            return 1.0;
        }
        let p = self.precision();
        let r = self.recall();
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// Mean of sensitivity and specificity. A term whose denominator is zero is
    /// dropped and the remaining term returned.
    pub fn balanced_accuracy(&self) -> f64 {
        match (self.positives() > 0, self.negatives() > 0) {
            (true, true) => (self.sensitivity() + self.specificity()) / 2.0,
            (false, true) => self.specificity(),
            (true, false) => self.sensitivity(),
            (false, false) => 0.0,
        }
    }

    pub fn flags(&self) -> Vec<&'static str> {
        let mut flags = Vec::new();
        if self.absent_in_both() {
            flags.push("absent-in-both");
        }
        if self.positives() == 0 {
            flags.push("no-positives:sensitivity-dropped");
        }
        if self.negatives() == 0 {
            flags.push("no-negatives:specificity-dropped");
        }
        if self.tp + self.fp == 0 {
            flags.push("no-predicted-positives:precision-zero");
        }
        flags
    }

    pub fn add(&mut self, truth: bool, predicted: bool) {
        match (truth, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }
}

/// Voxel counts for class `cls` against the rest, over every voxel.
pub fn voxel_confusion(gt: &LabelGrid, pred: &LabelGrid, cls: u8) -> Result<ConfusionCounts> {
    gt.geometry().ensure_aligned(pred.geometry())?;
    let mut counts = ConfusionCounts::default();
    for (&g, &p) in gt.data().iter().zip(pred.data()) {
        counts.add(g == cls, p == cls);
    }
    Ok(counts)
}
