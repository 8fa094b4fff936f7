use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::manifest::{Manifest, Split};
use super::stratify::{equity_tests, stratify, stratum_bootstrap, Attribute, EquityCase, EquityTests, Stratification, StratifyOptions};
use crate::error::{Error, Result};
use crate::metrics::{cohort_detection, roc_pr, CaseEvaluation, DetectionSummary, RocPr};
use crate::stats::{bland_altman, ols_r2, BlandAltman, BootstrapSummary, MeanSd, OlsFit};

pub const SCHEMA_VERSION: u32 = 1;
pub const EXPECTED_TRAIN_FRACTION: f64 = 0.9;
/// Allowed deviation of the observed train fraction before flagging.
pub const SPLIT_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCheck {
    pub n_train: usize,
    pub n_test: usize,
    pub train_fraction: Option<f64>,
    pub expected_train_fraction: f64,
    pub consistent: bool,
}

impl SplitCheck {
    pub fn of(manifest: &Manifest) -> Self {
        let n_train = manifest.records.iter().filter(|r| r.split == Split::Train).count();
        Self::from_counts(n_train, manifest.records.len() - n_train)
    }

    pub fn from_counts(n_train: usize, n_test: usize) -> Self {
        let total = n_train + n_test;
        let train_fraction = (total > 0).then(|| n_train as f64 / total as f64);
        SplitCheck {
            n_train,
            n_test,
            train_fraction,
            expected_train_fraction: EXPECTED_TRAIN_FRACTION,
            consistent: train_fraction.is_some_and(|f| (f - EXPECTED_TRAIN_FRACTION).abs() <= SPLIT_TOLERANCE),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocSummary {
    pub auroc: f64,
    pub average_precision: f64,
    pub n_positive: usize,
    pub n_negative: usize,
}

impl From<&RocPr> for RocSummary {
    fn from(r: &RocPr) -> Self {
        RocSummary { auroc: r.auroc, average_precision: r.average_precision, n_positive: r.n_positive, n_negative: r.n_negative }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeAgreement {
    pub ols: OlsFit,
    pub bland_altman: BlandAltman,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallSummary {
    pub detection: DetectionSummary,
    pub bootstrap: BTreeMap<String, BootstrapSummary>,
    pub dice: MeanSd,
    pub max_enh_prob: Option<MeanSd>,
    pub mean_entropy: Option<MeanSd>,
    pub high_uncertainty_fraction: Option<f64>,
    pub roc: Option<RocSummary>,
    /// Predicted against ground-truth enhancing volume over gt-positive cases.
    pub volume_agreement: Option<VolumeAgreement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquityReport {
    pub schema_version: u32,
    pub seed: u64,
    pub iterations: usize,
    pub options: StratifyOptions,
    /// Free-form provenance filled by front-ends (tool version, input digests).
    pub provenance: BTreeMap<String, String>,
    pub n_cases: usize,
    pub split_check: Option<SplitCheck>,
    pub overall: Option<OverallSummary>,
    pub stratifications: Vec<Stratification>,
    pub tests: Vec<EquityTests>,
    /// Analyses that could not be computed, with the reason.
    pub notes: Vec<String>,
}

fn overall(cases: &[EquityCase], opts: &StratifyOptions, notes: &mut Vec<String>) -> Result<OverallSummary> {
    let evals: Vec<CaseEvaluation> = cases.iter().map(|c| c.evaluation.clone()).collect();
    let detection = cohort_detection(&evals)?;
    let refs: Vec<&EquityCase> = cases.iter().collect();
    let boot = if refs.len() >= 2 {
        stratum_bootstrap(&refs, opts.iterations, opts.seed)?
    } else {
        notes.push("overall: insufficient-n for bootstrap".into());
        BTreeMap::new()
    };
    let positives: Vec<&CaseEvaluation> = evals.iter().filter(|e| e.gt_positive).collect();
    let dice: Vec<f64> = positives.iter().map(|e| e.enhancing_dice()).collect();
    let probs: Vec<f64> = cases.iter().filter_map(|c| c.max_enh_prob).collect();
    let entropies: Vec<f64> = cases.iter().filter_map(|c| c.mean_entropy).collect();
    let roc = if probs.len() == cases.len() && !cases.is_empty() {
        let scores: Vec<(f64, bool)> = cases.iter().map(|c| (c.max_enh_prob.unwrap_or(0.0), c.evaluation.gt_positive)).collect();
        match roc_pr(&scores) {
            Ok(r) => Some(RocSummary::from(&r)),
            Err(e) => {
                notes.push(format!("roc: {e}"));
                None
            }
        }
    } else {
        None
    };
    let gt_vol: Vec<f64> = positives.iter().map(|e| e.gt_enh_volume_cm3).collect();
    let pred_vol: Vec<f64> = positives.iter().map(|e| e.pred_enh_volume_cm3).collect();
    let volume_agreement = if gt_vol.len() >= 2 {
        match (ols_r2(&gt_vol, &pred_vol), bland_altman(&pred_vol, &gt_vol)) {
            (Ok(ols), Ok(ba)) => Some(VolumeAgreement { ols, bland_altman: ba }),
            (Err(e), _) | (_, Err(e)) => {
                notes.push(format!("volume agreement: {e}"));
                None
            }
        }
    } else {
        None
    };
    Ok(OverallSummary {
        detection,
        bootstrap: boot,
        dice: MeanSd::of(&dice),
        max_enh_prob: (!probs.is_empty()).then(|| MeanSd::of(&probs)),
        high_uncertainty_fraction: (!entropies.is_empty())
            .then(|| entropies.iter().filter(|&&h| h > crate::uncertainty::HIGH_UNCERTAINTY_ENTROPY).count() as f64 / entropies.len() as f64),
        mean_entropy: (!entropies.is_empty()).then(|| MeanSd::of(&entropies)),
        roc,
        volume_agreement,
    })
}

/// Overall summary, one stratification per requested attribute and the
/// equity tests wherever at least two strata qualify.
pub fn build_report(
    cases: &[EquityCase],
    attributes: &[Attribute],
    split_check: Option<SplitCheck>,
    opts: &StratifyOptions,
) -> Result<EquityReport> {
    let mut notes = Vec::new();
    let overall = if cases.is_empty() { None } else { Some(overall(cases, opts, &mut notes)?) };
    let mut stratifications = Vec::new();
    let mut tests = Vec::new();
    for &attr in attributes {
        let s = stratify(cases, attr, opts)?;
        match equity_tests(cases, &s) {
            Ok(t) => tests.push(t),
            Err(e) => notes.push(format!("{attr}: {e}")),
        }
        stratifications.push(s);
    }
    Ok(EquityReport {
        schema_version: SCHEMA_VERSION,
        seed: opts.seed,
        iterations: opts.iterations,
        options: *opts,
        provenance: BTreeMap::new(),
        n_cases: cases.len(),
        split_check,
        overall,
        stratifications,
        tests,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumRow {
    pub attribute: String,
    pub stratum: String,
    pub n: usize,
    pub n_gt_positive: usize,
    pub balanced_accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub ba_ci_lo: Option<f64>,
    pub ba_ci_hi: Option<f64>,
    pub ba_boot_sd: Option<f64>,
    pub dice_mean: f64,
    pub dice_sd: f64,
    pub dice_boot_sd: Option<f64>,
    pub success_rate: Option<f64>,
    pub max_enh_prob_mean: Option<f64>,
    pub max_enh_prob_sd: Option<f64>,
    pub flags: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRow {
    pub attribute: String,
    pub test_name: String,
    pub statistic: f64,
    pub df1: f64,
    pub df2: Option<f64>,
    pub p: f64,
    pub p_bonferroni: f64,
    pub family_size: usize,
}

pub fn stratum_rows(report: &EquityReport) -> Vec<StratumRow> {
    report
        .stratifications
        .iter()
        .flat_map(|s| s.strata.iter())
        .map(|r| {
            let ba = r.bootstrap.get("balanced_accuracy");
            StratumRow {
                attribute: r.attribute.to_string(),
                stratum: r.stratum.clone(),
                n: r.n,
                n_gt_positive: r.detection.n_gt_positive,
                balanced_accuracy: r.detection.balanced_accuracy,
                sensitivity: r.detection.sensitivity,
                specificity: r.detection.specificity,
                ba_ci_lo: ba.map(|b| b.ci_lo),
                ba_ci_hi: ba.map(|b| b.ci_hi),
                ba_boot_sd: ba.map(|b| b.sd),
                dice_mean: r.dice.mean,
                dice_sd: r.dice.sd,
                dice_boot_sd: r.bootstrap.get("mean_dice").map(|b| b.sd),
                success_rate: r.success_rate,
                max_enh_prob_mean: r.max_enh_prob.map(|m| m.mean),
                max_enh_prob_sd: r.max_enh_prob.map(|m| m.sd),
                flags: r.flags.join(";"),
            }
        })
        .collect()
}

pub fn test_rows(report: &EquityReport) -> Vec<TestRow> {
    report
        .tests
        .iter()
        .flat_map(|t| t.results.iter().map(move |r| (t.attribute, r)))
        .map(|(attr, r)| {
            let (df1, df2) = match r.df {
                crate::stats::Df::One(d) => (d, None),
                crate::stats::Df::Two(a, b) => (a, Some(b)),
            };
            TestRow {
                attribute: attr.to_string(),
                test_name: r.test_name.clone(),
                statistic: r.statistic,
                df1,
                df2,
                p: r.p,
                p_bonferroni: r.p_bonferroni,
                family_size: r.family_size,
            }
        })
        .collect()
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Validation(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn report_json(report: &EquityReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "n/a".into())
}

pub fn report_markdown(report: &EquityReport) -> String {
    let mut md = String::new();
    let _ = writeln!(md, "# Equity report\n");
    let _ = writeln!(md, "Schema version {}, seed {}, {} bootstrap iterations, {} cases.\n", report.schema_version, report.seed, report.iterations, report.n_cases);
    if let Some(sc) = &report.split_check {
        let _ = writeln!(
            md,
            "Split: {} train / {} test (train fraction {}; expected {:.2}{}).\n",
            sc.n_train,
            sc.n_test,
            opt(sc.train_fraction, 3),
            sc.expected_train_fraction,
            if sc.consistent { "" } else { ", deviates" }
        );
    }
    if let Some(o) = &report.overall {
        let d = &o.detection;
        let _ = writeln!(md, "## Overall\n");
        let _ = writeln!(md, "| Metric | Value |\n|---|---|");
        let _ = writeln!(md, "| Balanced accuracy | {:.3} |", d.balanced_accuracy);
        let _ = writeln!(md, "| Sensitivity | {:.3} |", d.sensitivity);
        let _ = writeln!(md, "| Specificity | {:.3} |", d.specificity);
        let _ = writeln!(md, "| Dice (gt-positive, n={}) | {:.3} ± {:.3} |", o.dice.n, o.dice.mean, o.dice.sd);
        let _ = writeln!(md, "| Success rate (Dice ≥ 0.3) | {} |", opt(d.success_rate, 3));
        if let Some(r) = &o.roc {
            let _ = writeln!(md, "| AUROC | {:.3} |", r.auroc);
            let _ = writeln!(md, "| Average precision | {:.3} |", r.average_precision);
        }
        if let Some(h) = &o.mean_entropy {
            let _ = writeln!(md, "| Mean entropy | {:.3} ± {:.3} |", h.mean, h.sd);
        }
        if let Some(v) = &o.volume_agreement {
            let _ = writeln!(md, "| Volume R² | {:.3} |", v.ols.r2);
            let b = &v.bland_altman;
            let _ = writeln!(md, "| Bland-Altman bias (LoA) | {:.3} ({:.3}, {:.3}) |", b.mean_diff, b.loa_lo, b.loa_hi);
        }
        md.push('\n');
    }
    for s in &report.stratifications {
        let _ = writeln!(md, "## By {}\n", s.attribute);
        if s.n_excluded > 0 {
            let _ = writeln!(md, "{} case(s) excluded for a missing value.\n", s.n_excluded);
        }
        let _ = writeln!(md, "| Stratum | n | Dice (mean ± SD) | Success rate | Balanced accuracy [95% CI] | Max enhancing prob | Flags |");
        let _ = writeln!(md, "|---|---|---|---|---|---|---|");
        for r in &s.strata {
            let ci = r
                .bootstrap
                .get("balanced_accuracy")
                .map(|b| format!(" [{:.3}, {:.3}]", b.ci_lo, b.ci_hi))
                .unwrap_or_default();
            let _ = writeln!(
                md,
                "| {} | {} | {:.3} ± {:.3} | {} | {:.3}{} | {} | {} |",
                r.stratum,
                r.n,
                r.dice.mean,
                r.dice.sd,
                opt(r.success_rate, 3),
                r.detection.balanced_accuracy,
                ci,
                r.max_enh_prob.map(|m| format!("{:.3} ± {:.3}", m.mean, m.sd)).unwrap_or_else(|| "n/a".into()),
                r.flags.join(", ")
            );
        }
        md.push('\n');
        if let Some(t) = report.tests.iter().find(|t| t.attribute == s.attribute) {
            for r in &t.results {
                let _ = writeln!(md, "- {}: statistic {:.4}, p {:.3e}, Bonferroni p {:.3e} (m = {})", r.test_name, r.statistic, r.p, r.p_bonferroni, r.family_size);
            }
            for sk in &t.skipped {
                let _ = writeln!(md, "- {} skipped: {}", sk.test_name, sk.reason);
            }
            md.push('\n');
        }
    }
    if !report.notes.is_empty() {
        let _ = writeln!(md, "## Notes\n");
        for n in &report.notes {
            let _ = writeln!(md, "- {n}");
        }
    }
    md
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf> {
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `report.json`, `report.md` and `tables/{strata,tests,cases}.csv`
/// under `dir`; returns the written paths.
pub fn emit_report(report: &EquityReport, cases: &[EquityCase], dir: &Path) -> Result<Vec<PathBuf>> {
    let tables = dir.join("tables");
    std::fs::create_dir_all(&tables).map_err(|e| Error::io(&tables, e))?;
    let case_rows: Vec<_> = cases.iter().map(|c| c.evaluation.csv_row()).collect();
    Ok(vec![
        write(dir.join("report.json"), &report_json(report)?)?,
        write(dir.join("report.md"), &report_markdown(report))?,
        write(tables.join("strata.csv"), &to_csv(&stratum_rows(report))?)?,
        write(tables.join("tests.csv"), &to_csv(&test_rows(report))?)?,
        write(tables.join("cases.csv"), &to_csv(&case_rows)?)?,
    ])
}
