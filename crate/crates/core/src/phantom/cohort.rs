use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::degrade::{degrade_to_dice, with_lesion, DegradeMethod};
use super::shapes::{generate_case, ExpectedFeatures, PhantomMetadata, PhantomSpec, Shape};
use crate::equity::{write_manifest, CaseRecord, Sex, Split};
use crate::error::{Error, Result};
use crate::grid::{LabelGrid, ProbGrid, N_CLASSES};
use crate::stats::bootstrap::iteration_seed;
use crate::volume_io::save;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumSpec {
    pub metadata: PhantomMetadata,
    pub target_dice: Option<f64>,
    /// Cycled over the stratum's positive cases.
    pub shapes: Vec<Shape>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub n_cases: usize,
    /// Fraction of gt-negative cases, spread evenly through the cohort.
    pub negative_fraction: f64,
    pub dims: [usize; 3],
    pub spacing_mm: f64,
    pub seed: u64,
    /// Cases are assigned to strata round-robin.
    pub strata: Vec<StratumSpec>,
    pub method: DegradeMethod,
    /// Each lesion is scaled by a seeded factor in `[1 - size_jitter, 1]`.
    pub size_jitter: f64,
    pub noise_sd: f32,
    pub gzip: bool,
}

impl CohortSpec {
    /// Two sites with target Dice 0.8 and 0.4 and mixed shapes sized for a
    /// 64³ grid.
    pub fn two_site(n_cases: usize, seed: u64) -> Self {
        let meta = |cohort: &str, pathology: &str, country: &str| PhantomMetadata {
            cohort: cohort.into(),
            pathology: pathology.into(),
            country: country.into(),
            age: None,
            sex: None,
        };
        CohortSpec {
            n_cases,
            negative_fraction: 0.2,
            dims: [64, 64, 64],
            spacing_mm: 1.0,
            seed,
            strata: vec![
                StratumSpec {
                    metadata: meta("site_a", "presurgical glioma", "UK"),
                    target_dice: Some(0.8),
                    shapes: vec![
                        Shape::Ball { radius: 12.0 },
                        Shape::Ellipsoid { semi_axes: [16.0, 10.0, 8.0] },
                        Shape::MultiBall { count: 3, radius: 5.0 },
                    ],
                },
                StratumSpec {
                    metadata: meta("site_b", "metastases", "USA"),
                    target_dice: Some(0.4),
                    shapes: vec![
                        Shape::Ball { radius: 9.0 },
                        Shape::Cube { side: 16 },
                        Shape::InfiltrativeBlob { radius: 12.0 },
                    ],
                },
            ],
            method: DegradeMethod::Shift,
            size_jitter: 0.3,
            noise_sd: 5.0,
            gzip: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.strata.is_empty() {
            return Err(Error::Validation("cohort needs at least one stratum".into()));
        }
        if self.strata.iter().any(|s| s.shapes.is_empty()) {
            return Err(Error::Validation("every stratum needs at least one shape".into()));
        }
        if !(0.0..=1.0).contains(&self.negative_fraction) {
            return Err(Error::Validation(format!("negative_fraction {} outside [0, 1]", self.negative_fraction)));
        }
        if !(0.0..1.0).contains(&self.size_jitter) {
            return Err(Error::Validation(format!("size_jitter {} outside [0, 1)", self.size_jitter)));
        }
        Ok(())
    }

    pub fn n_negative(&self) -> usize {
        (self.n_cases as f64 * self.negative_fraction).round() as usize
    }

    /// Negatives at evenly spaced indices.
    pub fn is_negative(&self, i: usize) -> bool {
        let (n, k) = (self.n_cases, self.n_negative());
        n > 0 && (i + 1) * k / n > i * k / n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortCase {
    pub case_id: String,
    pub stratum: usize,
    pub shape: Option<Shape>,
    pub target_dice: Option<f64>,
    pub achieved_dice: Option<f64>,
    /// Confidence of the synthetic probability map.
    pub confidence: f64,
    pub expected: ExpectedFeatures,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct GeneratedCohort {
    pub manifest_path: PathBuf,
    pub records: Vec<CaseRecord>,
    pub cases: Vec<CohortCase>,
}

/// Probability map putting `confidence` on the predicted class and spreading
/// the rest evenly.
pub fn confident_probabilities(pred: &LabelGrid, confidence: f32) -> Result<ProbGrid> {
    let rest = (1.0 - confidence) / N_CLASSES as f32;
    pred.map(|l| {
        let mut p = [rest; N_CLASSES];
        p[l as usize] += confidence;
        p
    })
}

fn case_files(dir: &Path, id: &str, gzip: bool) -> [PathBuf; 6] {
    let ext = if gzip { "nii.gz" } else { "nii" };
    ["t1", "t2", "flair", "gt_labels", "pred_labels", "pred_prob"].map(|n| dir.join(id).join(format!("{n}.{ext}")))
}

fn generate_one(spec: &CohortSpec, i: usize, out_dir: &Path) -> Result<(CaseRecord, CohortCase)> {
    let seed = iteration_seed(spec.seed, i as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = i % spec.strata.len();
    let stratum = &spec.strata[s];
    let negative = spec.is_negative(i);
    let scale = 1.0 - spec.size_jitter * rng.random::<f64>();
    let shape = (!negative).then(|| stratum.shapes[(i / spec.strata.len()) % stratum.shapes.len()].scaled(scale));
    let mut meta = stratum.metadata.clone();
    let age = meta.age.unwrap_or_else(|| rng.random_range(5..90) as f64);
    let sex = meta.sex.unwrap_or(if rng.random::<bool>() { Sex::Male } else { Sex::Female });
    meta.age = Some(age);
    meta.sex = Some(sex);
    let phantom_spec = PhantomSpec {
        shape,
        dims: spec.dims,
        spacing_mm: spec.spacing_mm,
        target_dice: stratum.target_dice,
        seed,
        rim_width: Some(super::shapes::DEFAULT_RIM_WIDTH),
        noise_sd: spec.noise_sd,
        metadata: meta.clone(),
    };
    let case = generate_case(&phantom_spec)?;
    let (pred, achieved, flags) = match (shape, stratum.target_dice) {
        (Some(_), Some(t)) => {
            let d = degrade_to_dice(&case.lesion, t, spec.method)?;
            (with_lesion(&case.gt, &d.mask)?, Some(d.achieved_dice), d.flags)
        }
        (Some(_), None) => (case.gt.clone(), Some(1.0), vec![]),
        (None, _) => (case.gt.clone(), None, vec![]),
    };
    let confidence = 0.6 + 0.35 * rng.random::<f64>();
    let prob = confident_probabilities(&pred, confidence as f32)?;
    let id = format!("case{i:04}");
    let files = case_files(out_dir, &id, spec.gzip);
    let case_dir = out_dir.join(&id);
    std::fs::create_dir_all(&case_dir).map_err(|e| Error::io(&case_dir, e))?;
    save(&case.t1, &files[0])?;
    save(&case.t2, &files[1])?;
    save(&case.flair, &files[2])?;
    save(&case.gt, &files[3])?;
    save(&pred, &files[4])?;
    save(&prob, &files[5])?;
    let rel = |p: &PathBuf| p.strip_prefix(out_dir).expect("under out_dir").to_path_buf();
    let record = CaseRecord {
        case_id: id.clone(),
        cohort: meta.cohort,
        pathology: meta.pathology,
        country: meta.country,
        age: Some(age),
        sex: Some(sex),
        split: Split::Test,
        t1: rel(&files[0]),
        t2: rel(&files[1]),
        flair: rel(&files[2]),
        t1ce: None,
        gt_labels: rel(&files[3]),
        pred_labels: Some(rel(&files[4])),
        pred_prob: Some(rel(&files[5])),
        extra: [("phantom_shape".to_string(), shape.map(|s| s.name()).unwrap_or("none").to_string())].into(),
    };
    let cohort_case = CohortCase {
        case_id: id,
        stratum: s,
        shape,
        target_dice: stratum.target_dice.filter(|_| shape.is_some()),
        achieved_dice: achieved,
        confidence,
        expected: case.expected,
        flags,
    };
    Ok((record, cohort_case))
}

/// Writes every case's volumes under `out_dir/<case_id>/`, a `manifest.csv`
/// and an `expected.json` with the analytic expectations. All cases are
/// placed in the test split.
pub fn generate_cohort(spec: &CohortSpec, out_dir: &Path) -> Result<GeneratedCohort> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let generated: Vec<(CaseRecord, CohortCase)> =
        (0..spec.n_cases).into_par_iter().map(|i| generate_one(spec, i, out_dir)).collect::<Result<_>>()?;
    let (records, cases): (Vec<_>, Vec<_>) = generated.into_iter().unzip();
    let manifest_path = out_dir.join("manifest.csv");
    write_manifest(&manifest_path, &records)?;
    let expected_path = out_dir.join("expected.json");
    let mut json = serde_json::to_string_pretty(&cases)?;
    json.push('\n');
    std::fs::write(&expected_path, json).map_err(|e| Error::io(&expected_path, e))?;
    Ok(GeneratedCohort { manifest_path, records, cases })
}
