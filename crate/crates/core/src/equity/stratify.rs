use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::manifest::{CaseRecord, Sex};
use crate::error::{Error, Result};
use crate::metrics::{cohort_detection, detection_counts, CaseEvaluation, DetectionSummary};
use crate::morphology::Category;
use crate::stats::{
    anova_oneway, apply_bonferroni, bootstrap, levene, welch_t, BootstrapSummary, MeanSd, TestResult,
    DEFAULT_ITERATIONS, DEFAULT_SEED,
};

pub const FLAG_INSUFFICIENT_N: &str = "insufficient-n";

/// Lower edges of the volume bins in cm³; each bin is lower-inclusive.
pub const VOLUME_BIN_EDGES: [f64; 4] = [0.5, 1.0, 5.0, 10.0];
const VOLUME_BIN_LABELS: [&str; 5] = ["<0.5", "0.5-1", "1-5", "5-10", ">=10"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Cohort,
    Pathology,
    Country,
    AgeBin,
    Sex,
    VolumeBin,
    Category,
}

impl Attribute {
    pub const ALL: [Attribute; 7] = [
        Attribute::Cohort,
        Attribute::Pathology,
        Attribute::Country,
        Attribute::AgeBin,
        Attribute::Sex,
        Attribute::VolumeBin,
        Attribute::Category,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Attribute::Cohort => "cohort",
            Attribute::Pathology => "pathology",
            Attribute::Country => "country",
            Attribute::AgeBin => "age_bin",
            Attribute::Sex => "sex",
            Attribute::VolumeBin => "volume_bin",
            Attribute::Category => "category",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Attribute::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown attribute {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeBins {
    /// 0-20, 21-40, 41-60, 61-80, 81+.
    #[default]
    Decades20,
    /// 30 or younger versus older.
    Split30,
}

impl AgeBins {
    /// Ordinal and label of the bin holding `age`.
    pub fn bin(self, age: f64) -> (usize, &'static str) {
        match self {
            AgeBins::Decades20 => {
                const LABELS: [&str; 5] = ["0-20", "21-40", "41-60", "61-80", "81+"];
                let i = [21.0, 41.0, 61.0, 81.0].iter().take_while(|&&edge| age >= edge).count();
                (i, LABELS[i])
            }
            AgeBins::Split30 => {
                if age <= 30.0 {
                    (0, "<=30")
                } else {
                    (1, ">30")
                }
            }
        }
    }
}

pub fn volume_bin(volume_cm3: f64) -> (usize, &'static str) {
    let i = VOLUME_BIN_EDGES.iter().take_while(|&&edge| volume_cm3 >= edge).count();
    (i, VOLUME_BIN_LABELS[i])
}

/// A test-split case with everything the equity analyses need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquityCase {
    pub case_id: String,
    pub cohort: String,
    pub pathology: String,
    pub country: String,
    pub age: Option<f64>,
    pub sex: Option<Sex>,
    pub evaluation: CaseEvaluation,
    /// Case score from the probability map, when one was supplied.
    pub max_enh_prob: Option<f64>,
    pub mean_entropy: Option<f64>,
    /// Radiomic category of the ground-truth lesion (gt-positive cases only).
    pub category: Option<Category>,
}

impl EquityCase {
    pub fn new(record: &CaseRecord, evaluation: CaseEvaluation) -> Self {
        EquityCase {
            case_id: record.case_id.clone(),
            cohort: record.cohort.clone(),
            pathology: record.pathology.clone(),
            country: record.country.clone(),
            age: record.age,
            sex: record.sex,
            evaluation,
            max_enh_prob: None,
            mean_entropy: None,
            category: None,
        }
    }

    fn dice(&self) -> Option<f64> {
        self.evaluation.gt_positive.then(|| self.evaluation.enhancing_dice())
    }

    /// Sort key and label of this case's stratum, or `None` when the
    /// attribute is missing or does not apply.
    pub fn stratum(&self, attribute: Attribute, age_bins: AgeBins) -> Option<(usize, String)> {
        match attribute {
            Attribute::Cohort => Some((0, self.cohort.clone())),
            Attribute::Pathology => Some((0, self.pathology.clone())),
            Attribute::Country => Some((0, self.country.clone())),
            Attribute::AgeBin => self.age.map(|a| {
                let (i, l) = age_bins.bin(a);
                (i, l.to_string())
            }),
            Attribute::Sex => self.sex.map(|s| (s as usize, s.as_str().to_string())),
            Attribute::VolumeBin => self.evaluation.gt_positive.then(|| {
                let (i, l) = volume_bin(self.evaluation.gt_enh_volume_cm3);
                (i, l.to_string())
            }),
            Attribute::Category => self.category.map(|c| {
                let i = Category::ALL.iter().position(|&x| x == c).unwrap_or(0);
                (i, c.as_str().to_string())
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratifyOptions {
    pub iterations: usize,
    pub seed: u64,
    pub age_bins: AgeBins,
}

impl Default for StratifyOptions {
    fn default() -> Self {
        StratifyOptions { iterations: DEFAULT_ITERATIONS, seed: DEFAULT_SEED, age_bins: AgeBins::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumReport {
    pub attribute: Attribute,
    pub stratum: String,
    pub n: usize,
    pub detection: DetectionSummary,
    /// Bootstrap summaries keyed by metric name; empty for insufficient n.
    pub bootstrap: BTreeMap<String, BootstrapSummary>,
    /// Enhancing Dice over gt-positive cases (SD over cases).
    pub dice: MeanSd,
    pub success_rate: Option<f64>,
    pub max_enh_prob: Option<MeanSd>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratification {
    pub attribute: Attribute,
    pub strata: Vec<StratumReport>,
    /// Cases without a value for the attribute.
    pub n_excluded: usize,
    /// Case indices per stratum, parallel to `strata`.
    #[serde(skip)]
    pub members: Vec<Vec<usize>>,
}

/// Bootstraps the detection metrics over all cases and the lesion metrics
/// over gt-positive cases.
pub fn stratum_bootstrap(cases: &[&EquityCase], iterations: usize, seed: u64) -> Result<BTreeMap<String, BootstrapSummary>> {
    let mut out = BTreeMap::new();
    let pairs = |cs: &[&EquityCase]| detection_counts(cs.iter().map(|c| (c.evaluation.gt_positive, c.evaluation.pred_positive)));
    out.insert("balanced_accuracy".into(), bootstrap(cases, |cs| pairs(cs).balanced_accuracy(), iterations, seed)?);
    out.insert("sensitivity".into(), bootstrap(cases, |cs| pairs(cs).sensitivity(), iterations, seed)?);
    out.insert("specificity".into(), bootstrap(cases, |cs| pairs(cs).specificity(), iterations, seed)?);
    let dice: Vec<f64> = cases.iter().filter_map(|c| c.dice()).collect();
    if dice.len() >= 2 {
        out.insert("mean_dice".into(), bootstrap(&dice, crate::stats::mean, iterations, seed)?);
        let success = |d: &[f64]| d.iter().filter(|&&v| crate::metrics::DetectionTier::from_dice(v).is_success()).count() as f64 / d.len() as f64;
        out.insert("success_rate".into(), bootstrap(&dice, success, iterations, seed)?);
    }
    Ok(out)
}

fn stratum_report(attribute: Attribute, label: String, cases: &[&EquityCase], opts: &StratifyOptions) -> Result<StratumReport> {
    let evals: Vec<CaseEvaluation> = cases.iter().map(|c| c.evaluation.clone()).collect();
    let detection = cohort_detection(&evals)?;
    let dice: Vec<f64> = cases.iter().filter_map(|c| c.dice()).collect();
    let probs: Vec<f64> = cases.iter().filter_map(|c| c.max_enh_prob).collect();
    let mut flags = Vec::new();
    let boot = if cases.len() < 2 {
        flags.push(FLAG_INSUFFICIENT_N.to_string());
        BTreeMap::new()
    } else {
        stratum_bootstrap(cases, opts.iterations, opts.seed)?
    };
    if dice.len() == 1 {
        flags.push("insufficient-n:lesion-metrics".to_string());
    }
    Ok(StratumReport {
        attribute,
        stratum: label,
        n: cases.len(),
        success_rate: detection.success_rate,
        detection,
        bootstrap: boot,
        dice: MeanSd::of(&dice),
        max_enh_prob: (!probs.is_empty()).then(|| MeanSd::of(&probs)),
        flags,
    })
}

/// Groups `cases` by `attribute` and summarises each stratum. Strata are
/// ordered by bin for binned attributes and by label otherwise.
pub fn stratify(cases: &[EquityCase], attribute: Attribute, opts: &StratifyOptions) -> Result<Stratification> {
    let mut groups: BTreeMap<(usize, String), Vec<usize>> = BTreeMap::new();
    let mut n_excluded = 0;
    for (i, c) in cases.iter().enumerate() {
        match c.stratum(attribute, opts.age_bins) {
            Some(key) => groups.entry(key).or_default().push(i),
            None => n_excluded += 1,
        }
    }
    let mut strata = Vec::with_capacity(groups.len());
    let mut members = Vec::with_capacity(groups.len());
    for ((_, label), idx) in groups {
        let group: Vec<&EquityCase> = idx.iter().map(|&i| &cases[i]).collect();
        strata.push(stratum_report(attribute, label, &group, opts)?);
        members.push(idx);
    }
    Ok(Stratification { attribute, strata, n_excluded, members })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedTest {
    pub test_name: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquityTests {
    pub attribute: Attribute,
    pub results: Vec<TestResult>,
    pub skipped: Vec<SkippedTest>,
}

/// ANOVA on per-case Dice, Levene on per-case maximal enhancing probability
/// and, for two strata, Welch's t on Dice; Bonferroni over the tests that ran.
pub fn equity_tests(cases: &[EquityCase], strat: &Stratification) -> Result<EquityTests> {
    let collect = |f: &dyn Fn(&EquityCase) -> Option<f64>| -> Vec<Vec<f64>> {
        strat
            .members
            .iter()
            .map(|idx| idx.iter().filter_map(|&i| f(&cases[i])).collect::<Vec<f64>>())
            .filter(|g| g.len() >= 2)
            .collect()
    };
    let dice = collect(&|c| c.dice());
    let probs = collect(&|c| c.max_enh_prob);
    let eligible = strat.members.iter().filter(|m| m.len() >= 2).count();
    if eligible < 2 {
        return Err(Error::Degenerate(format!(
            "need >= 2 strata with n >= 2 for {}, got {eligible}",
            strat.attribute
        )));
    }
    let mut results = Vec::new();
    let mut skipped = Vec::new();
    let mut run = |name: &str, groups: &[Vec<f64>], f: &dyn Fn(&[Vec<f64>]) -> Result<TestResult>| {
        if groups.len() < 2 {
            skipped.push(SkippedTest { test_name: name.into(), reason: "fewer than 2 strata with n >= 2".into() });
            return;
        }
        match f(groups) {
            Ok(mut r) => {
                r.test_name = name.to_string();
                results.push(r)
            }
            Err(e) => skipped.push(SkippedTest { test_name: name.into(), reason: e.to_string() }),
        }
    };
    run("anova_dice", &dice, &|g| anova_oneway(g));
    run("levene_max_enh_prob", &probs, &|g| levene(g));
    if strat.strata.len() == 2 {
        run("welch_t_dice", &dice, &|g| welch_t(&g[0], &g[1]));
    }
    apply_bonferroni(&mut results);
    Ok(EquityTests { attribute: strat.attribute, results, skipped })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::metrics::{ClassMetrics, ConfusionCounts, DetectionTier};
    use crate::stats::mean;
    use proptest::prelude::*;

    /// Evaluation with a given enhancing Dice built from exact counts.
    pub(crate) fn eval_with(id: &str, gt_positive: bool, pred_positive: bool, dice_permille: u64) -> CaseEvaluation {
        let (tp, fp_fn) = if gt_positive { (dice_permille, 1000 - dice_permille) } else { (0, 0) };
        let counts = ConfusionCounts::new(tp, fp_fn, 100_000, fp_fn);
        let enh = ClassMetrics::from_counts(3, counts);
        let other = |c| ClassMetrics::from_counts(c, ConfusionCounts::new(10, 0, 10, 0));
        CaseEvaluation {
            case_id: id.into(),
            classes: vec![other(1), other(2), enh.clone()],
            gt_enh_volume_cm3: if gt_positive { 0.5 + dice_permille as f64 / 100.0 } else { 0.0 },
            pred_enh_volume_cm3: if pred_positive { 1.0 } else { 0.0 },
            gt_positive,
            pred_positive,
            detection_tier: if gt_positive { DetectionTier::from_dice(enh.dice) } else { DetectionTier::None },
        }
    }

    fn case(id: usize, cohort: &str, gt: bool, pred: bool, dice_permille: u64) -> EquityCase {
        EquityCase {
            case_id: format!("c{id}"),
            cohort: cohort.into(),
            pathology: "glioma".into(),
            country: "UK".into(),
            age: (id % 7 != 0).then_some((id * 13 % 90) as f64),
            sex: Some(if id % 2 == 0 { Sex::Male } else { Sex::Female }),
            evaluation: eval_with(&format!("c{id}"), gt, pred, dice_permille),
            max_enh_prob: Some(((id * 37) % 100) as f64 / 100.0),
            mean_entropy: None,
            category: None,
        }
    }

    fn quick() -> StratifyOptions {
        StratifyOptions { iterations: 100, ..Default::default() }
    }

    #[test]
    fn bins_are_lower_inclusive() {
        assert_eq!(volume_bin(0.5).1, "0.5-1");
        assert_eq!(volume_bin(0.499).1, "<0.5");
        assert_eq!(volume_bin(10.0).1, ">=10");
        assert_eq!(AgeBins::Decades20.bin(20.0).1, "0-20");
        assert_eq!(AgeBins::Decades20.bin(21.0).1, "21-40");
        assert_eq!(AgeBins::Decades20.bin(95.0).1, "81+");
        assert_eq!(AgeBins::Split30.bin(30.0).1, "<=30");
    }

    #[test]
    fn single_stratum_equals_cohort_detection() {
        let cases: Vec<EquityCase> = (0..12).map(|i| case(i, "A", i % 3 != 0, i % 4 != 0, 300 + 50 * i as u64)).collect();
        let s = stratify(&cases, Attribute::Cohort, &quick()).unwrap();
        assert_eq!(s.strata.len(), 1);
        let evals: Vec<_> = cases.iter().map(|c| c.evaluation.clone()).collect();
        assert_eq!(s.strata[0].detection, cohort_detection(&evals).unwrap());
    }

    #[test]
    fn missing_attribute_is_excluded_and_counted() {
        let cases: Vec<EquityCase> = (0..21).map(|i| case(i, "A", true, true, 500)).collect();
        let s = stratify(&cases, Attribute::AgeBin, &quick()).unwrap();
        assert_eq!(s.n_excluded, 3);
        assert_eq!(s.strata.iter().map(|r| r.n).sum::<usize>(), 18);
    }

    #[test]
    fn singleton_stratum_flagged() {
        let mut cases: Vec<EquityCase> = (0..5).map(|i| case(i, "A", true, true, 500)).collect();
        cases.push(case(5, "B", true, true, 500));
        let s = stratify(&cases, Attribute::Cohort, &quick()).unwrap();
        let b = &s.strata[1];
        assert_eq!(b.flags, vec![FLAG_INSUFFICIENT_N.to_string(), "insufficient-n:lesion-metrics".to_string()]);
        assert!(b.bootstrap.is_empty());
    }

    #[test]
    fn separated_dice_strata() {
        let cases: Vec<EquityCase> = (0..100)
            .map(|i| {
                let jitter = (i % 5) as u64 * 10;
                if i < 50 { case(i, "A", true, true, 780 + jitter) } else { case(i, "B", true, true, 380 + jitter) }
            })
            .collect();
        let s = stratify(&cases, Attribute::Cohort, &quick()).unwrap();
        assert!((s.strata[0].dice.mean - 0.8).abs() < 1e-9 && (s.strata[1].dice.mean - 0.4).abs() < 1e-9);
        let t = equity_tests(&cases, &s).unwrap();
        let names: Vec<&str> = t.results.iter().map(|r| r.test_name.as_str()).collect();
        assert_eq!(names, ["anova_dice", "levene_max_enh_prob", "welch_t_dice"]);
        assert!(t.results[0].p_bonferroni < 1e-3);
        assert_eq!(t.results[0].family_size, 3);
    }

    #[test]
    fn identical_strata_anova_is_null() {
        let cases: Vec<EquityCase> = (0..40).map(|i| case(i, if i % 2 == 0 { "A" } else { "B" }, true, true, 300 + (i / 2 % 5) as u64 * 100)).collect();
        let s = stratify(&cases, Attribute::Cohort, &quick()).unwrap();
        let t = equity_tests(&cases, &s).unwrap();
        assert!(t.results[0].statistic.abs() < 1e-12);
        assert!((t.results[0].p - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_stratum_test_rejected() {
        let cases: Vec<EquityCase> = (0..10).map(|i| case(i, "A", true, true, 500)).collect();
        let s = stratify(&cases, Attribute::Cohort, &quick()).unwrap();
        let err = equity_tests(&cases, &s).unwrap_err();
        assert!(err.to_string().contains(">= 2 strata"), "{err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn stratified_means_recompose(spec in prop::collection::vec((0usize..4, any::<bool>(), 0u64..=1000), 2..40)) {
            let cohorts = ["A", "B", "C", "D"];
            let cases: Vec<EquityCase> = spec.iter().enumerate().map(|(i, &(s, gt, d))| case(i, cohorts[s], gt, true, d)).collect();
            let opts = StratifyOptions { iterations: 20, ..Default::default() };
            for attr in [Attribute::Cohort, Attribute::Sex, Attribute::AgeBin, Attribute::VolumeBin] {
                let s = stratify(&cases, attr, &opts).unwrap();
                let mut seen: Vec<usize> = s.members.iter().flatten().copied().collect();
                seen.sort_unstable();
                seen.dedup();
                prop_assert_eq!(seen.len() + s.n_excluded, cases.len());
                let included: Vec<f64> = s.members.iter().flatten().filter_map(|&i| cases[i].dice()).collect();
                if included.is_empty() { continue; }
                let num: f64 = s.strata.iter().map(|r| r.dice.n as f64 * r.dice.mean).sum();
                let den: usize = s.strata.iter().map(|r| r.dice.n).sum();
                prop_assert!((num / den as f64 - mean(&included)).abs() < 1e-9);
            }
        }
    }
}
