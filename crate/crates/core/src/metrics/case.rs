use serde::{Deserialize, Serialize};

use super::confusion::{voxel_confusion, ConfusionCounts};
use crate::error::{Error, Result};
use crate::grid::{LabelGrid, ENHANCING, NON_ENHANCING, NORMAL_BRAIN};

pub const ACCEPTABLE_DICE: f64 = 0.3;
pub const GOOD_DICE: f64 = 0.5;
pub const EXCELLENT_DICE: f64 = 0.7;

/// Lesion-level grading of enhancing-tumour Dice. Lower bounds are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionTier {
    None,
    Below,
    Acceptable,
    Good,
    Excellent,
}

impl DetectionTier {
    pub fn from_dice(dice: f64) -> Self {
        if dice >= EXCELLENT_DICE {
            DetectionTier::Excellent
        } else if dice >= GOOD_DICE {
            DetectionTier::Good
        } else if dice >= ACCEPTABLE_DICE {
            DetectionTier::Acceptable
        } else {
            DetectionTier::Below
        }
    }

    pub fn is_success(self) -> bool {
        self >= DetectionTier::Acceptable
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DetectionTier::None => "none",
            DetectionTier::Below => "below",
            DetectionTier::Acceptable => "acceptable",
            DetectionTier::Good => "good",
            DetectionTier::Excellent => "excellent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: u8,
    pub counts: ConfusionCounts,
    pub dice: f64,
    pub balanced_accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub absent_in_both: bool,
    pub flags: Vec<String>,
}

impl ClassMetrics {
    pub fn from_counts(class: u8, counts: ConfusionCounts) -> Self {
        ClassMetrics {
            class,
            dice: counts.dice(),
            balanced_accuracy: counts.balanced_accuracy(),
            precision: counts.precision(),
            recall: counts.recall(),
            f1: counts.f1(),
            absent_in_both: counts.absent_in_both(),
            flags: counts.flags().into_iter().map(String::from).collect(),
            counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEvaluation {
    pub case_id: String,
    /// Metrics for classes 1 (normal brain), 2 (non-enhancing), 3 (enhancing).
    pub classes: Vec<ClassMetrics>,
    pub gt_enh_volume_cm3: f64,
    pub pred_enh_volume_cm3: f64,
    pub gt_positive: bool,
    pub pred_positive: bool,
    pub detection_tier: DetectionTier,
}

impl CaseEvaluation {
    pub fn class(&self, class: u8) -> &ClassMetrics {
        self.classes
            .iter()
            .find(|c| c.class == class)
            .expect("classes 1..=3 are always evaluated")
    }

    pub fn enhancing_dice(&self) -> f64 {
        self.class(ENHANCING).dice
    }

    pub fn success(&self) -> bool {
        self.detection_tier.is_success()
    }

    pub fn csv_row(&self) -> CaseCsvRow {
        let m = |c: u8| self.class(c);
        CaseCsvRow {
            case_id: self.case_id.clone(),
            gt_positive: self.gt_positive,
            pred_positive: self.pred_positive,
            detection_tier: self.detection_tier.as_str().to_string(),
            gt_enh_volume_cm3: self.gt_enh_volume_cm3,
            pred_enh_volume_cm3: self.pred_enh_volume_cm3,
            dice_1: m(NORMAL_BRAIN).dice,
            dice_2: m(NON_ENHANCING).dice,
            dice_3: m(ENHANCING).dice,
            ba_1: m(NORMAL_BRAIN).balanced_accuracy,
            ba_2: m(NON_ENHANCING).balanced_accuracy,
            ba_3: m(ENHANCING).balanced_accuracy,
            precision_1: m(NORMAL_BRAIN).precision,
            precision_2: m(NON_ENHANCING).precision,
            precision_3: m(ENHANCING).precision,
            recall_1: m(NORMAL_BRAIN).recall,
            recall_2: m(NON_ENHANCING).recall,
            recall_3: m(ENHANCING).recall,
            f1_1: m(NORMAL_BRAIN).f1,
            f1_2: m(NON_ENHANCING).f1,
            f1_3: m(ENHANCING).f1,
            enh_absent_in_both: m(ENHANCING).absent_in_both,
        }
    }
}

/// Flat tabular form of [`CaseEvaluation`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseCsvRow {
    pub case_id: String,
    pub gt_positive: bool,
    pub pred_positive: bool,
    pub detection_tier: String,
    pub gt_enh_volume_cm3: f64,
    pub pred_enh_volume_cm3: f64,
    pub dice_1: f64,
    pub dice_2: f64,
    pub dice_3: f64,
    pub ba_1: f64,
    pub ba_2: f64,
    pub ba_3: f64,
    pub precision_1: f64,
    pub precision_2: f64,
    pub precision_3: f64,
    pub recall_1: f64,
    pub recall_2: f64,
    pub recall_3: f64,
    pub f1_1: f64,
    pub f1_2: f64,
    pub f1_3: f64,
    pub enh_absent_in_both: bool,
}

pub fn evaluate_case(
    case_id: &str,
    gt: &LabelGrid,
    pred: &LabelGrid,
    min_pred_volume_cm3: f64,
) -> Result<CaseEvaluation> {
    gt.geometry().ensure_aligned(pred.geometry())?;
    let classes = [NORMAL_BRAIN, NON_ENHANCING, ENHANCING]
        .into_iter()
        .map(|c| voxel_confusion(gt, pred, c).map(|counts| ClassMetrics::from_counts(c, counts)))
        .collect::<Result<Vec<_>>>()?;
    let voxel_cm3 = gt.geometry().voxel_volume_mm3() / 1000.0;
    let gt_vol = gt.count(ENHANCING) as f64 * voxel_cm3;
    let pred_vol = pred.count(ENHANCING) as f64 * voxel_cm3;
    let gt_positive = gt_vol > 0.0;
    let pred_positive = pred_vol > min_pred_volume_cm3;
    let enh_dice = classes[2].dice;
    let detection_tier = if gt_positive {
        DetectionTier::from_dice(enh_dice)
    } else {
        DetectionTier::None
    };
    Ok(CaseEvaluation {
        case_id: case_id.to_string(),
        classes,
        gt_enh_volume_cm3: gt_vol,
        pred_enh_volume_cm3: pred_vol,
        gt_positive,
        pred_positive,
        detection_tier,
    })
}

/// Patient-level detection performance of a cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub n: usize,
    pub counts: ConfusionCounts,
    pub balanced_accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub f1: f64,
    /// Fraction of gt-positive cases reaching the acceptable tier; `None` if there are none.
    pub success_rate: Option<f64>,
    pub n_gt_positive: usize,
    pub flags: Vec<String>,
}

pub fn detection_counts<'a>(pairs: impl IntoIterator<Item = (bool, bool)> + 'a) -> ConfusionCounts {
    let mut counts = ConfusionCounts::default();
    for (truth, predicted) in pairs {
        counts.add(truth, predicted);
    }
    counts
}

pub fn cohort_detection(evals: &[CaseEvaluation]) -> Result<DetectionSummary> {
    if evals.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let counts = detection_counts(evals.iter().map(|e| (e.gt_positive, e.pred_positive)));
    let positives: Vec<&CaseEvaluation> = evals.iter().filter(|e| e.gt_positive).collect();
    let success_rate = if positives.is_empty() {
        None
    } else {
        Some(positives.iter().filter(|e| e.success()).count() as f64 / positives.len() as f64)
    };
    let mut flags: Vec<String> = counts
        .flags()
        .into_iter()
        .filter(|f| !f.starts_with("absent"))
        .map(String::from)
        .collect();
    if success_rate.is_none() {
        flags.push("no-gt-positive:success-rate-undefined".into());
    }
    Ok(DetectionSummary {
        n: evals.len(),
        balanced_accuracy: counts.balanced_accuracy(),
        sensitivity: counts.sensitivity(),
        specificity: counts.specificity(),
        precision: counts.precision(),
        f1: if counts.tp + counts.fp + counts.fn_ == 0 { 0.0 } else { counts.f1() },
        success_rate,
        n_gt_positive: positives.len(),
        flags,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Geometry;

    fn grid_with_lesions(gt_voxels: usize, pred_voxels: usize, overlap: usize) -> (LabelGrid, LabelGrid) {
        // lesion voxels laid along a line in a 64x4x4 grid
        let geom = Geometry::isotropic([64, 4, 4], 1.0).unwrap();
        let gt_range = 0..gt_voxels;
        let start = gt_voxels - overlap;
        let pred_range = start..start + pred_voxels;
        let gt = LabelGrid::from_fn(geom.clone(), |x, y, z| {
            if y == 0 && z == 0 && gt_range.contains(&x) {
                3
            } else {
                1
            }
        })
        .unwrap();
        let pred = LabelGrid::from_fn(geom, |x, y, z| {
            if y == 0 && z == 0 && pred_range.contains(&x) {
                3
            } else {
                1
            }
        })
        .unwrap();
        (gt, pred)
    }

    #[test]
    fn negative_negative_case() {
        let g = LabelGrid::filled(Geometry::isotropic([4, 4, 4], 1.0).unwrap(), 1).unwrap();
        let e = evaluate_case("neg", &g, &g, 0.0).unwrap();
        assert!(!e.gt_positive && !e.pred_positive);
        assert_eq!(e.detection_tier, DetectionTier::None);
        assert!(e.class(3).absent_in_both);
    }

    #[test]
    fn tier_boundaries_inclusive() {
        // dice = 2*overlap/(gt+pred)
        for (gt, pred, overlap, tier) in [
            (10, 10, 3, DetectionTier::Acceptable),
            (10, 10, 5, DetectionTier::Good),
            (10, 10, 7, DetectionTier::Excellent),
            (10, 10, 2, DetectionTier::Below),
        ] {
            let (g, p) = grid_with_lesions(gt, pred, overlap);
            let e = evaluate_case("c", &g, &p, 0.0).unwrap();
            assert_eq!(e.detection_tier, tier, "dice {}", e.enhancing_dice());
        }
        assert_eq!(DetectionTier::from_dice(0.3), DetectionTier::Acceptable);
        assert_eq!(DetectionTier::from_dice(0.69), DetectionTier::Good);
        assert_eq!(DetectionTier::from_dice(0.5), DetectionTier::Good);
        assert_eq!(DetectionTier::from_dice(0.7), DetectionTier::Excellent);
        assert_eq!(DetectionTier::from_dice(0.2999999), DetectionTier::Below);
    }

    #[test]
    fn min_pred_volume_threshold() {
        let (g, p) = grid_with_lesions(10, 5, 5);
        assert!(evaluate_case("c", &g, &p, 0.0).unwrap().pred_positive);
        assert!(!evaluate_case("c", &g, &p, 0.005).unwrap().pred_positive);
    }

    #[test]
    fn volumes_in_cm3() {
        let (g, p) = grid_with_lesions(20, 10, 10);
        let e = evaluate_case("c", &g, &p, 0.0).unwrap();
        assert!((e.gt_enh_volume_cm3 - 0.02).abs() < 1e-15);
        assert!((e.pred_enh_volume_cm3 - 0.01).abs() < 1e-15);
    }

    fn synthetic(gt_positive: bool, pred_positive: bool, tier: DetectionTier) -> CaseEvaluation {
        CaseEvaluation {
            case_id: String::new(),
            classes: Vec::new(),
            gt_enh_volume_cm3: 0.0,
            pred_enh_volume_cm3: 0.0,
            gt_positive,
            pred_positive,
            detection_tier: tier,
        }
    }

    #[test]
    fn perfect_cohort() {
        let evals = vec![
            synthetic(true, true, DetectionTier::Excellent),
            synthetic(false, false, DetectionTier::None),
        ];
        let s = cohort_detection(&evals).unwrap();
        assert_eq!((s.balanced_accuracy, s.sensitivity, s.specificity), (1.0, 1.0, 1.0));
        assert_eq!(s.success_rate, Some(1.0));
    }

    #[test]
    fn ten_case_cohort() {
        let mut evals = Vec::new();
        for i in 0..8 {
            evals.push(synthetic(true, i < 7, DetectionTier::Good));
        }
        evals.push(synthetic(false, false, DetectionTier::None));
        evals.push(synthetic(false, true, DetectionTier::None));
        let s = cohort_detection(&evals).unwrap();
        assert!((s.sensitivity - 0.875).abs() < 1e-15);
        assert!((s.specificity - 0.5).abs() < 1e-15);
        assert!((s.balanced_accuracy - 0.6875).abs() < 1e-15);
    }

    #[test]
    fn no_negatives_falls_back_to_sensitivity() {
        let evals = vec![
            synthetic(true, true, DetectionTier::Good),
            synthetic(true, false, DetectionTier::Below),
        ];
        let s = cohort_detection(&evals).unwrap();
        assert_eq!(s.balanced_accuracy, 0.5);
        assert!(s.flags.iter().any(|f| f.contains("specificity-dropped")));
        assert_eq!(s.success_rate, Some(0.5));
    }

    #[test]
    fn empty_cohort() {
        assert!(matches!(cohort_detection(&[]), Err(Error::EmptyCohort)));
    }
}
