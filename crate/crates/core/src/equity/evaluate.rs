use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{CaseRecord, Manifest};
use super::stratify::EquityCase;
use crate::error::{Error, Result};
use crate::grid::ENHANCING;
use crate::metrics::evaluate_case;
use crate::morphology::{analyze_lesion, Connectivity, RadiomicFeatures};
use crate::uncertainty::{summarize_case, UncertaintySummary};
use crate::volume_io::{load_labels, load_probabilities};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluateOptions {
    pub min_pred_volume_cm3: f64,
    pub connectivity: Connectivity,
    /// Compute shape features and category of the ground-truth lesion.
    pub radiomics: bool,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        EvaluateOptions { min_pred_volume_cm3: 0.0, connectivity: Connectivity::default(), radiomics: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutput {
    pub case: EquityCase,
    pub uncertainty: Option<UncertaintySummary>,
    /// Ground-truth lesion features; `None` for gt-negative cases.
    pub radiomics: Option<RadiomicFeatures>,
}

/// Loads and evaluates one record. The intracranial region for uncertainty
/// is every voxel with a nonzero ground-truth label.
pub fn evaluate_record(manifest: &Manifest, record: &CaseRecord, opts: &EvaluateOptions) -> Result<CaseOutput> {
    let pred_path = record
        .pred_labels
        .as_ref()
        .ok_or_else(|| Error::Manifest(format!("case {:?} has no pred_labels", record.case_id)))?;
    let gt = load_labels(&manifest.resolve(&record.gt_labels))?;
    let pred = load_labels(&manifest.resolve(pred_path))?;
    let evaluation = evaluate_case(&record.case_id, &gt, &pred, opts.min_pred_volume_cm3)?;
    let mut case = EquityCase::new(record, evaluation);
    let uncertainty = match &record.pred_prob {
        Some(p) => {
            let prob = load_probabilities(&manifest.resolve(p))?;
            let s = summarize_case(&prob, &pred, &gt.intracranial())?;
            case.max_enh_prob = Some(s.max_enh_prob);
            case.mean_entropy = Some(s.mean_entropy);
            Some(s)
        }
        None => None,
    };
    let radiomics = if opts.radiomics && gt.count(ENHANCING) > 0 {
        let f = analyze_lesion(&gt.class_mask(ENHANCING), opts.connectivity)?.features;
        case.category = f.category;
        Some(f)
    } else {
        None
    };
    Ok(CaseOutput { case, uncertainty, radiomics })
}

/// Evaluates every test-split record in parallel; output keeps manifest order.
pub fn evaluate_manifest(manifest: &Manifest, opts: &EvaluateOptions) -> Result<Vec<CaseOutput>> {
    let records: Vec<&CaseRecord> = manifest.test_records().collect();
    records
        .par_iter()
        .map(|r| evaluate_record(manifest, r, opts))
        .collect()
}
