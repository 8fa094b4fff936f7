//! Entropy maps and case-level uncertainty summaries from probability maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{LabelGrid, Mask, ProbGrid, VoxelGrid, ENHANCING, N_CLASSES};

pub const HIGH_UNCERTAINTY_ENTROPY: f64 = 0.5;
pub const FLAG_NO_PREDICTED_ENHANCING: &str = "no-predicted-enhancing:mean-prob-0";

/// Entropy of one voxel's class distribution, normalised to [0, 1] by ln 4.
pub fn voxel_entropy(p: &[f32; 4]) -> f64 {
    let h: f64 = p
        .iter()
        .map(|&v| v.max(0.0) as f64)
        .filter(|&v| v > 0.0)
        .map(|v| -v * v.ln())
        .sum();
    (h / (N_CLASSES as f64).ln()).clamp(0.0, 1.0)
}

pub fn entropy_map(prob: &ProbGrid) -> VoxelGrid {
    prob.map(|p| voxel_entropy(&p) as f32).expect("entropy is finite")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySummary {
    pub mean_enh_prob: f64,
    pub max_enh_prob: f64,
    pub mean_entropy: f64,
    pub boundary_fraction: f64,
    pub high_uncertainty: bool,
    pub flags: Vec<String>,
}

impl UncertaintySummary {
    /// Case score for ROC/PR analysis.
    pub fn case_score(&self) -> f64 {
        self.max_enh_prob
    }
}

pub fn summarize_case(prob: &ProbGrid, pred: &LabelGrid, intracranial: &Mask) -> Result<UncertaintySummary> {
    prob.geometry().ensure_aligned(pred.geometry())?;
    prob.geometry().ensure_aligned(intracranial.geometry())?;
    let n_brain = intracranial.count();
    if n_brain == 0 {
        return Err(Error::Validation("intracranial mask is empty".into()));
    }
    let mut entropy_sum = 0.0;
    let mut boundary = 0usize;
    let mut max_enh = 0.0f64;
    let (mut enh_sum, mut enh_n) = (0.0, 0usize);
    for ((p, &label), &inside) in prob.data().iter().zip(pred.data()).zip(intracranial.data()) {
        let enh = p[ENHANCING as usize].clamp(0.0, 1.0) as f64;
        if label == ENHANCING {
            enh_sum += enh;
            enh_n += 1;
        }
        if inside {
            let h = voxel_entropy(p);
            entropy_sum += h;
            if h > HIGH_UNCERTAINTY_ENTROPY {
                boundary += 1;
            }
            max_enh = max_enh.max(enh);
        }
    }
    let mut flags = Vec::new();
    let mean_enh_prob = if enh_n == 0 {
        flags.push(FLAG_NO_PREDICTED_ENHANCING.to_string());
        0.0
    } else {
        enh_sum / enh_n as f64
    };
    let mean_entropy = entropy_sum / n_brain as f64;
    Ok(UncertaintySummary {
        mean_enh_prob,
        max_enh_prob: max_enh,
        mean_entropy,
        boundary_fraction: boundary as f64 / n_brain as f64,
        high_uncertainty: mean_entropy > HIGH_UNCERTAINTY_ENTROPY,
        flags,
    })
}
