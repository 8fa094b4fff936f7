use enhance_core::metrics::{detection_counts, ConfusionCounts};
use enhance_core::stats::{bootstrap, BootstrapSummary};
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const REPORT_BOOTSTRAP_ITERATIONS: usize = 1000;

/// One presented case once the session is complete.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRow {
    pub position: usize,
    pub case_id: String,
    pub gt_positive: bool,
    pub model_positive: bool,
    pub reader_positive: bool,
}

impl CaseRow {
    pub fn reader_correct(&self) -> bool {
        self.reader_positive == self.gt_positive
    }

    pub fn model_correct(&self) -> bool {
        self.model_positive == self.gt_positive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub counts: ConfusionCounts,
    pub balanced_accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub f1: f64,
    pub balanced_accuracy_bootstrap: Option<BootstrapSummary>,
    pub flags: Vec<String>,
}

impl MetricSet {
    /// `pairs` are (truth, call). Both metric sets of a report use the same
    /// seed and length, so their resamples draw the same cases.
    pub fn from_pairs(pairs: &[(bool, bool)], iterations: usize, seed: u64) -> Self {
        let counts = detection_counts(pairs.iter().copied());
        let mut flags: Vec<String> = counts.flags().into_iter().map(String::from).collect();
        let ba_bootstrap = match bootstrap(pairs, |s| detection_counts(s.iter().copied()).balanced_accuracy(), iterations, seed) {
            Ok(b) => Some(b),
            Err(e) => {
                flags.push(format!("bootstrap-skipped:{e}"));
                None
            }
        };
        MetricSet {
            balanced_accuracy: counts.balanced_accuracy(),
            sensitivity: counts.sensitivity(),
            specificity: counts.specificity(),
            precision: counts.precision(),
            f1: counts.f1(),
            balanced_accuracy_bootstrap: ba_bootstrap,
            flags,
            counts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CrossTable {
    pub both_right: usize,
    pub reader_wrong_model_right: usize,
    pub model_wrong_reader_right: usize,
    pub both_wrong: usize,
}

impl CrossTable {
    pub fn of(rows: &[CaseRow]) -> Self {
        let mut t = CrossTable::default();
        for r in rows {
            match (r.reader_correct(), r.model_correct()) {
                (true, true) => t.both_right += 1,
                (false, true) => t.reader_wrong_model_right += 1,
                (true, false) => t.model_wrong_reader_right += 1,
                (false, false) => t.both_wrong += 1,
            }
        }
        t
    }

    pub fn total(&self) -> usize {
        self.both_right + self.reader_wrong_model_right + self.model_wrong_reader_right + self.both_wrong
    }

    /// Share of reader errors the model got right.
    pub fn model_rescue_rate(&self) -> Option<f64> {
        let wrong = self.reader_wrong_model_right + self.both_wrong;
        (wrong > 0).then(|| self.reader_wrong_model_right as f64 / wrong as f64)
    }
}

/// Reader-versus-model comparison; contains no timestamps so identical
/// answers give identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaderReport {
    pub session_id: String,
    pub reader_id: String,
    pub seed: u64,
    pub n_cases: usize,
    pub reader: MetricSet,
    pub model: MetricSet,
    pub cross_table: CrossTable,
    pub model_rescue_rate: Option<f64>,
    pub cases: Vec<CaseRow>,
}

pub fn reader_report(session_id: &str, reader_id: &str, seed: u64, rows: Vec<CaseRow>, iterations: usize) -> Result<ReaderReport> {
    let reader: Vec<(bool, bool)> = rows.iter().map(|r| (r.gt_positive, r.reader_positive)).collect();
    let model: Vec<(bool, bool)> = rows.iter().map(|r| (r.gt_positive, r.model_positive)).collect();
    let cross_table = CrossTable::of(&rows);
    Ok(ReaderReport {
        session_id: session_id.to_string(),
        reader_id: reader_id.to_string(),
        seed,
        n_cases: rows.len(),
        reader: MetricSet::from_pairs(&reader, iterations, seed),
        model: MetricSet::from_pairs(&model, iterations, seed),
        model_rescue_rate: cross_table.model_rescue_rate(),
        cross_table,
        cases: rows,
    })
}
