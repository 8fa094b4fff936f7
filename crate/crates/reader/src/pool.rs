use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use enhance_core::equity::{CaseRecord, Manifest};
use enhance_core::grid::ENHANCING;
use enhance_core::volume_io::load_labels;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ReaderError, Result};

/// Non-contrast sequences shown to readers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sequence {
    T1,
    T2,
    Flair,
}

impl Sequence {
    pub const ALL: [Sequence; 3] = [Sequence::T1, Sequence::T2, Sequence::Flair];

    pub fn as_str(self) -> &'static str {
        match self {
            Sequence::T1 => "t1",
            Sequence::T2 => "t2",
            Sequence::Flair => "flair",
        }
    }
}

impl FromStr for Sequence {
    type Err = ReaderError;

    fn from_str(s: &str) -> Result<Self> {
        Sequence::ALL
            .into_iter()
            .find(|q| q.as_str() == s)
            .ok_or_else(|| ReaderError::BadRequest(format!("unknown sequence {s:?}; expected t1, t2 or flair")))
    }
}

impl fmt::Display for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One eligible case. Only the server ever sees this.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolCase {
    pub case_id: String,
    pub gt_positive: bool,
    pub model_positive: bool,
    /// Resolved paths of t1, t2 and flair.
    pub sequences: [PathBuf; 3],
}

impl PoolCase {
    pub fn path(&self, seq: Sequence) -> &PathBuf {
        &self.sequences[seq as usize]
    }
}

/// Test-split cases with model predictions, sorted by case id.
#[derive(Debug, Clone, Default)]
pub struct CasePool {
    cases: Vec<PoolCase>,
    index: HashMap<String, usize>,
}

impl CasePool {
    pub fn new(mut cases: Vec<PoolCase>) -> Result<Self> {
        cases.sort_by(|a, b| a.case_id.cmp(&b.case_id));
        let mut index = HashMap::with_capacity(cases.len());
        for (i, c) in cases.iter().enumerate() {
            if index.insert(c.case_id.clone(), i).is_some() {
                return Err(ReaderError::BadRequest(format!("duplicate case {:?}", c.case_id)));
            }
        }
        Ok(CasePool { cases, index })
    }

    /// Test-split records with `pred_labels`; ground truth and model calls
    /// come from the enhancing class of the label maps.
    pub fn from_manifest(manifest: &Manifest) -> Result<Self> {
        let records: Vec<&CaseRecord> = manifest.test_records().filter(|r| r.pred_labels.is_some()).collect();
        let cases = records
            .par_iter()
            .map(|r| -> Result<PoolCase> {
                let gt = load_labels(&manifest.resolve(&r.gt_labels))?;
                let pred = load_labels(&manifest.resolve(r.pred_labels.as_ref().expect("filtered")))?;
                Ok(PoolCase {
                    case_id: r.case_id.clone(),
                    gt_positive: gt.count(ENHANCING) > 0,
                    model_positive: pred.count(ENHANCING) > 0,
                    sequences: [&r.t1, &r.t2, &r.flair].map(|p| manifest.resolve(p)),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        CasePool::new(cases)
    }

    pub fn cases(&self) -> &[PoolCase] {
        &self.cases
    }

    pub fn get(&self, case_id: &str) -> Option<&PoolCase> {
        self.index.get(case_id).map(|&i| &self.cases[i])
    }

    pub fn index_of(&self, case_id: &str) -> Option<usize> {
        self.index.get(case_id).copied()
    }

    pub fn count(&self, gt_positive: bool) -> usize {
        self.cases.iter().filter(|c| c.gt_positive == gt_positive).count()
    }
}
