use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use enhance_core::equity::{
    build_report, emit_report, evaluate_manifest, load_manifest, to_csv, AgeBins, Attribute, CaseOutput,
    EvaluateOptions, Manifest, SplitCheck, StratifyOptions,
};
use enhance_core::grid::{Mask, ENHANCING, NON_ENHANCING};
use enhance_core::metrics::{cohort_detection, roc_pr, CaseEvaluation, RocPr};
use enhance_core::morphology::{analyze_lesion, duplicate_scan, Connectivity, RadiomicFeatures};
use enhance_core::phantom::{generate_cohort, CohortSpec, DegradeMethod};
use enhance_core::stats::{fit_logistic, mean};
use enhance_core::volume_io::load_labels;
use enhance_core::Error as CoreError;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::provenance::Provenance;
use crate::{
    BinsPreset, ConnectivityArg, DedupArgs, DetectFitArgs, EquityArgs, EvaluateArgs, InputArgs, LabelSource, MaskKind,
    MethodArg, PhantomArgs, RadiomicsArgs, ServeArgs, UncertaintyArgs,
};

impl From<ConnectivityArg> for Connectivity {
    fn from(c: ConnectivityArg) -> Self {
        match c {
            ConnectivityArg::Six => Connectivity::Six,
            ConnectivityArg::Eighteen => Connectivity::Eighteen,
            ConnectivityArg::TwentySix => Connectivity::TwentySix,
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(CoreError::from)?;
    s.push('\n');
    write_text(path, &s)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_text(path, &to_csv(rows)?)
}

/// Loads the manifest and digests its inputs; `--strict` checks files first.
fn open_input(input: &InputArgs, command: &str, seed: u64) -> Result<(Manifest, Provenance)> {
    let manifest = load_manifest(&input.manifest)?;
    if input.strict {
        manifest.check_files()?;
    }
    let provenance = Provenance::for_manifest(command, seed, &input.manifest, &manifest)?;
    create_dir(&input.out)?;
    Ok((manifest, provenance))
}

fn evaluate_all(manifest: &Manifest, opts: &EvaluateOptions) -> Result<Vec<CaseOutput>> {
    let outputs = evaluate_manifest(manifest, opts)?;
    if outputs.is_empty() {
        return Err(CoreError::EmptyCohort.into());
    }
    log::info!("evaluated {} test cases", outputs.len());
    Ok(outputs)
}

fn done(paths: &[PathBuf]) {
    for p in paths {
        log::info!("wrote {}", p.display());
    }
}

#[derive(Serialize)]
struct EvaluationSummary<'a> {
    provenance: &'a Provenance,
    options: &'a EvaluateOptions,
    n_cases: usize,
    detection: enhance_core::metrics::DetectionSummary,
}

pub fn evaluate(a: &EvaluateArgs, seed: u64) -> Result<()> {
    let (manifest, provenance) = open_input(&a.input, "evaluate", seed)?;
    let opts = EvaluateOptions {
        min_pred_volume_cm3: a.min_pred_volume_cm3,
        connectivity: a.connectivity.into(),
        radiomics: true,
    };
    let outputs = evaluate_all(&manifest, &opts)?;
    let cases_dir = a.input.out.join("cases");
    create_dir(&cases_dir)?;
    for o in &outputs {
        write_json(&cases_dir.join(format!("{}.json", o.case.case_id)), o)?;
    }
    let evals: Vec<CaseEvaluation> = outputs.iter().map(|o| o.case.evaluation.clone()).collect();
    let rows: Vec<_> = evals.iter().map(|e| e.csv_row()).collect();
    let csv_path = a.input.out.join("cases.csv");
    write_csv(&csv_path, &rows)?;
    let summary = EvaluationSummary { provenance: &provenance, options: &opts, n_cases: evals.len(), detection: cohort_detection(&evals)? };
    let summary_path = a.input.out.join("evaluation.json");
    write_json(&summary_path, &summary)?;
    done(&[cases_dir, csv_path, summary_path]);
    Ok(())
}

#[derive(Serialize)]
struct RadiomicsRow {
    case_id: String,
    n_components: usize,
    volume_cm3: f64,
    surface_area_mm2: f64,
    sphericity: f64,
    solidity: f64,
    compactness: f64,
    surface_to_volume: f64,
    elongation: Option<f64>,
    category: String,
    flags: String,
}

impl RadiomicsRow {
    fn new(case_id: &str, f: &RadiomicFeatures) -> Self {
        RadiomicsRow {
            case_id: case_id.to_string(),
            n_components: f.n_components,
            volume_cm3: f.volume_cm3,
            surface_area_mm2: f.surface_area_mm2,
            sphericity: f.sphericity,
            solidity: f.solidity,
            compactness: f.compactness,
            surface_to_volume: f.surface_to_volume,
            elongation: f.elongation,
            category: f.category.map(|c| c.as_str().to_string()).unwrap_or_default(),
            flags: f.flags.join(";"),
        }
    }
}

#[derive(Serialize)]
struct RadiomicsSummary<'a> {
    provenance: &'a Provenance,
    source: &'a str,
    n_lesions: usize,
    categories: BTreeMap<String, usize>,
    no_lesion: Vec<String>,
}

pub fn radiomics(a: &RadiomicsArgs, seed: u64) -> Result<()> {
    let (manifest, provenance) = open_input(&a.input, "radiomics", seed)?;
    let connectivity: Connectivity = a.connectivity.into();
    let records: Vec<_> = manifest.test_records().collect();
    let results: Vec<(String, Option<RadiomicFeatures>)> = records
        .par_iter()
        .map(|r| -> Result<_> {
            let path = match a.source {
                LabelSource::Gt => &r.gt_labels,
                LabelSource::Pred => r.pred_labels.as_ref().ok_or_else(|| {
                    CoreError::Manifest(format!("case {:?} has no pred_labels", r.case_id))
                })?,
            };
            let labels = load_labels(&manifest.resolve(path))?;
            let mask = labels.class_mask(ENHANCING);
            let features = if mask.count() == 0 { None } else { Some(analyze_lesion(&mask, connectivity)?.features) };
            Ok((r.case_id.clone(), features))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut categories = BTreeMap::new();
    let mut no_lesion = Vec::new();
    for (id, f) in &results {
        match f {
            Some(f) => {
                rows.push(RadiomicsRow::new(id, f));
                if let Some(c) = f.category {
                    *categories.entry(c.as_str().to_string()).or_insert(0) += 1;
                }
            }
            None => no_lesion.push(id.clone()),
        }
    }
    let csv_path = a.input.out.join("radiomics.csv");
    write_csv(&csv_path, &rows)?;
    let source = match a.source {
        LabelSource::Gt => "gt",
        LabelSource::Pred => "pred",
    };
    let summary_path = a.input.out.join("categories.json");
    write_json(&summary_path, &RadiomicsSummary { provenance: &provenance, source, n_lesions: rows.len(), categories, no_lesion })?;
    done(&[csv_path, summary_path]);
    Ok(())
}

pub fn equity(a: &EquityArgs, seed: u64) -> Result<()> {
    let (manifest, provenance) = open_input(&a.input, "equity", seed)?;
    let attributes = if a.attributes.is_empty() {
        Attribute::ALL.to_vec()
    } else {
        a.attributes.iter().map(|s| s.trim().parse()).collect::<Result<Vec<Attribute>, _>>()?
    };
    let opts = EvaluateOptions {
        min_pred_volume_cm3: a.min_pred_volume_cm3,
        connectivity: a.connectivity.into(),
        radiomics: attributes.contains(&Attribute::Category),
    };
    let cases: Vec<_> = evaluate_all(&manifest, &opts)?.into_iter().map(|o| o.case).collect();
    let age_bins = match a.bins {
        BinsPreset::Decades20 => AgeBins::Decades20,
        BinsPreset::Split30 => AgeBins::Split30,
    };
    let stratify = StratifyOptions { iterations: a.iterations, seed, age_bins };
    let mut report = build_report(&cases, &attributes, Some(SplitCheck::of(&manifest)), &stratify)?;
    report.provenance = provenance.as_map();
    let written = emit_report(&report, &cases, &a.input.out)?;
    done(&written);
    Ok(())
}

#[derive(Serialize)]
struct CurvePoint {
    volume_cm3: f64,
    probability: f64,
}

#[derive(Serialize)]
struct DetectFitOutput<'a> {
    provenance: &'a Provenance,
    /// Detection means Dice at or above the acceptable tier.
    outcome: &'static str,
    n: usize,
    n_detected: usize,
    fit: enhance_core::stats::LogisticFit,
    volume_at_half_cm3: f64,
    curve: Vec<CurvePoint>,
}

pub fn detect_fit(a: &DetectFitArgs, seed: u64) -> Result<()> {
    let (manifest, provenance) = open_input(&a.input, "detect-fit", seed)?;
    let opts = EvaluateOptions { min_pred_volume_cm3: a.min_pred_volume_cm3, radiomics: false, ..Default::default() };
    let outputs = evaluate_all(&manifest, &opts)?;
    let positives: Vec<&CaseEvaluation> =
        outputs.iter().map(|o| &o.case.evaluation).filter(|e| e.gt_positive).collect();
    let detected: Vec<bool> = positives.iter().map(|e| e.success()).collect();
    let volumes: Vec<f64> = positives.iter().map(|e| e.gt_enh_volume_cm3).collect();
    let fit = fit_logistic(&detected, &volumes)?;
    let lo = volumes.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = volumes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let curve: Vec<CurvePoint> = fit
        .curve(lo, hi, a.curve_points.max(1))
        .into_iter()
        .map(|(volume_cm3, probability)| CurvePoint { volume_cm3, probability })
        .collect();
    let curve_path = a.input.out.join("curve.csv");
    write_csv(&curve_path, &curve)?;
    let out = DetectFitOutput {
        provenance: &provenance,
        outcome: "dice>=0.3",
        n: detected.len(),
        n_detected: detected.iter().filter(|&&d| d).count(),
        volume_at_half_cm3: fit.volume_at_half(),
        fit,
        curve,
    };
    let json_path = a.input.out.join("detect_fit.json");
    write_json(&json_path, &out)?;
    done(&[json_path, curve_path]);
    Ok(())
}

#[derive(Serialize)]
struct UncertaintyRow {
    case_id: String,
    gt_positive: bool,
    pred_positive: bool,
    mean_enh_prob: f64,
    max_enh_prob: f64,
    mean_entropy: f64,
    boundary_fraction: f64,
    high_uncertainty: bool,
    flags: String,
}

#[derive(Serialize)]
struct UncertaintySummaryOut<'a> {
    provenance: &'a Provenance,
    n: usize,
    mean_entropy: f64,
    high_uncertainty_fraction: f64,
    /// Case score is the maximum enhancing probability.
    roc: Option<RocPr>,
    notes: Vec<String>,
}

pub fn uncertainty(a: &UncertaintyArgs, seed: u64) -> Result<()> {
    let (manifest, provenance) = open_input(&a.input, "uncertainty", seed)?;
    let opts = EvaluateOptions { radiomics: false, ..Default::default() };
    let outputs = evaluate_all(&manifest, &opts)?;
    let rows: Vec<UncertaintyRow> = outputs
        .iter()
        .filter_map(|o| {
            let u = o.uncertainty.as_ref()?;
            let e = &o.case.evaluation;
            Some(UncertaintyRow {
                case_id: o.case.case_id.clone(),
                gt_positive: e.gt_positive,
                pred_positive: e.pred_positive,
                mean_enh_prob: u.mean_enh_prob,
                max_enh_prob: u.max_enh_prob,
                mean_entropy: u.mean_entropy,
                boundary_fraction: u.boundary_fraction,
                high_uncertainty: u.high_uncertainty,
                flags: u.flags.join(";"),
            })
        })
        .collect();
    if rows.is_empty() {
        return Err(CoreError::Validation("no test case has a pred_prob map".into()).into());
    }
    let mut notes = Vec::new();
    if rows.len() < outputs.len() {
        notes.push(format!("{} test cases without pred_prob skipped", outputs.len() - rows.len()));
    }
    let scores: Vec<(f64, bool)> = rows.iter().map(|r| (r.max_enh_prob, r.gt_positive)).collect();
    let roc = match roc_pr(&scores) {
        Ok(r) => Some(r),
        Err(e) => {
            notes.push(format!("roc: {e}"));
            None
        }
    };
    let entropies: Vec<f64> = rows.iter().map(|r| r.mean_entropy).collect();
    let summary = UncertaintySummaryOut {
        provenance: &provenance,
        n: rows.len(),
        mean_entropy: mean(&entropies),
        high_uncertainty_fraction: rows.iter().filter(|r| r.high_uncertainty).count() as f64 / rows.len() as f64,
        roc,
        notes,
    };
    let csv_path = a.input.out.join("uncertainty.csv");
    write_csv(&csv_path, &rows)?;
    let json_path = a.input.out.join("uncertainty.json");
    write_json(&json_path, &summary)?;
    done(&[csv_path, json_path]);
    Ok(())
}

pub fn phantom(a: &PhantomArgs, seed: u64) -> Result<()> {
    let mut spec = CohortSpec::two_site(a.n, seed);
    spec.dims = [a.size; 3];
    spec.negative_fraction = a.negative_fraction;
    spec.gzip = !a.no_gzip;
    spec.method = match a.method {
        MethodArg::Shift => DegradeMethod::Shift,
        MethodArg::Erode => DegradeMethod::Erode,
    };
    if let Some(t) = a.target_dice {
        for s in &mut spec.strata {
            s.target_dice = Some(t);
        }
    }
    let cohort = generate_cohort(&spec, &a.out)?;
    let flagged = cohort.cases.iter().filter(|c| !c.flags.is_empty()).count();
    if flagged > 0 {
        log::warn!("{flagged} cases carry flags; see expected.json");
    }
    write_json(&a.out.join("phantom.json"), &Provenance::bare("phantom", seed))?;
    log::info!("{} cases, manifest {}", cohort.cases.len(), cohort.manifest_path.display());
    println!("{}", cohort.manifest_path.display());
    Ok(())
}

#[derive(Serialize)]
struct DedupOutput<'a> {
    provenance: &'a Provenance,
    mask: &'static str,
    n_masks: usize,
    report: enhance_core::morphology::DedupReport,
}

pub fn dedup(a: &DedupArgs, seed: u64) -> Result<()> {
    let (manifest, provenance) = open_input(&a.input, "dedup", seed)?;
    let masks: Vec<(String, Mask)> = manifest
        .records
        .par_iter()
        .map(|r| -> Result<_> {
            let labels = load_labels(&manifest.resolve(&r.gt_labels))?;
            let mask = match a.mask {
                MaskKind::Lesion => labels.map(|l| l >= NON_ENHANCING)?,
                MaskKind::Enhancing => labels.class_mask(ENHANCING),
            };
            Ok((r.case_id.clone(), mask))
        })
        .collect::<Result<_>>()?;
    let report = duplicate_scan(&masks, a.threshold)?;
    let csv_path = a.input.out.join("dedup.csv");
    write_csv(&csv_path, &report.flagged)?;
    let mask = match a.mask {
        MaskKind::Lesion => "lesion",
        MaskKind::Enhancing => "enhancing",
    };
    let json_path = a.input.out.join("dedup.json");
    write_json(&json_path, &DedupOutput { provenance: &provenance, mask, n_masks: masks.len(), report })?;
    done(&[csv_path, json_path]);
    Ok(())
}

pub fn serve(a: ServeArgs, seed: u64) -> Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::io("tokio runtime", e))?;
    let config = enhance_reader::ServeConfig {
        listen: a.listen,
        manifest: a.manifest,
        journal_dir: a.journal_dir,
        seed,
        bearer_token: a.token,
    };
    runtime.block_on(enhance_reader::serve(config))?;
    Ok(())
}
