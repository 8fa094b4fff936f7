use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANDATORY_COLUMNS: [&str; 9] =
    ["case_id", "cohort", "pathology", "country", "split", "t1", "t2", "flair", "gt_labels"];
pub const OPTIONAL_COLUMNS: [&str; 5] = ["age", "sex", "t1ce", "pred_labels", "pred_prob"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

impl Sex {
    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Male => "male",
            Sex::Female => "female",
        }
    }
}

impl FromStr for Sex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" | "m" => Ok(Sex::Male),
            "female" | "f" => Ok(Sex::Female),
            other => Err(Error::Manifest(format!("unknown sex {other:?}"))),
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Manifest(format!("split must be train or test, got {other:?}"))),
        }
    }
}

/// One imaging session. Paths are stored as written in the manifest and
/// resolved against the manifest directory by [`Manifest::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub cohort: String,
    pub pathology: String,
    pub country: String,
    pub age: Option<f64>,
    pub sex: Option<Sex>,
    pub split: Split,
    pub t1: PathBuf,
    pub t2: PathBuf,
    pub flair: PathBuf,
    pub t1ce: Option<PathBuf>,
    pub gt_labels: PathBuf,
    pub pred_labels: Option<PathBuf>,
    pub pred_prob: Option<PathBuf>,
    /// Columns the manifest format does not know about, kept verbatim.
    pub extra: BTreeMap<String, String>,
}

impl CaseRecord {
    fn from_fields(fields: &BTreeMap<String, String>) -> Result<Self> {
        let id = fields.get("case_id").map(|s| s.trim().to_string()).unwrap_or_default();
        let ctx = |msg: String| Error::Manifest(format!("case {id:?}: {msg}"));
        if id.is_empty() {
            return Err(Error::Manifest("empty case_id".into()));
        }
        let get = |k: &str| fields.get(k).map(|s| s.trim()).filter(|s| !s.is_empty() && !is_missing(s));
        let required = |k: &str| get(k).map(str::to_string).ok_or_else(|| ctx(format!("missing value for {k}")));
        let path = |k: &str| get(k).map(PathBuf::from);
        let age = match get("age") {
            None => None,
            Some(a) => {
                let v: f64 = a.parse().map_err(|_| ctx(format!("age {a:?} is not a number")))?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(ctx(format!("age {v} must be non-negative")));
                }
                Some(v)
            }
        };
        let sex = get("sex").map(Sex::from_str).transpose().map_err(|e| ctx(e.to_string()))?;
        let split = Split::from_str(&required("split")?).map_err(|e| ctx(e.to_string()))?;
        let extra = fields
            .iter()
            .filter(|(k, _)| !MANDATORY_COLUMNS.contains(&k.as_str()) && !OPTIONAL_COLUMNS.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Ok(CaseRecord {
            cohort: required("cohort")?,
            pathology: required("pathology")?,
            country: required("country")?,
            age,
            sex,
            split,
            t1: PathBuf::from(required("t1")?),
            t2: PathBuf::from(required("t2")?),
            flair: PathBuf::from(required("flair")?),
            t1ce: path("t1ce"),
            gt_labels: PathBuf::from(required("gt_labels")?),
            pred_labels: path("pred_labels"),
            pred_prob: path("pred_prob"),
            extra,
            case_id: id,
        })
    }

    fn to_fields(&self) -> BTreeMap<String, String> {
        let p = |p: &Path| p.to_string_lossy().into_owned();
        let op = |p: &Option<PathBuf>| p.as_deref().map(|p| p.to_string_lossy().into_owned()).unwrap_or_default();
        let mut m = self.extra.clone();
        for (k, v) in [
            ("case_id", self.case_id.clone()),
            ("cohort", self.cohort.clone()),
            ("pathology", self.pathology.clone()),
            ("country", self.country.clone()),
            ("age", self.age.map(|a| a.to_string()).unwrap_or_default()),
            ("sex", self.sex.map(|s| s.as_str().to_string()).unwrap_or_default()),
            ("split", self.split.as_str().to_string()),
            ("t1", p(&self.t1)),
            ("t2", p(&self.t2)),
            ("flair", p(&self.flair)),
            ("t1ce", op(&self.t1ce)),
            ("gt_labels", p(&self.gt_labels)),
            ("pred_labels", op(&self.pred_labels)),
            ("pred_prob", op(&self.pred_prob)),
        ] {
            m.insert(k.to_string(), v);
        }
        m
    }

    /// Every file the record references.
    pub fn paths(&self) -> Vec<&Path> {
        let mut v = vec![self.t1.as_path(), self.t2.as_path(), self.flair.as_path(), self.gt_labels.as_path()];
        v.extend([&self.t1ce, &self.pred_labels, &self.pred_prob].into_iter().flatten().map(PathBuf::as_path));
        v
    }
}

fn is_missing(s: &str) -> bool {
    matches!(s.to_ascii_lowercase().as_str(), "na" | "nan" | "null" | "none")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub base_dir: PathBuf,
    pub records: Vec<CaseRecord>,
}

impl Manifest {
    pub fn new(base_dir: impl Into<PathBuf>, records: Vec<CaseRecord>) -> Result<Self> {
        check_unique(&records)?;
        Ok(Manifest { base_dir: base_dir.into(), records })
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn test_records(&self) -> impl Iterator<Item = &CaseRecord> {
        self.records.iter().filter(|r| r.split == Split::Test)
    }

    /// Eager existence check of every referenced file (the `--strict` path;
    /// otherwise files are checked when first loaded).
    pub fn check_files(&self) -> Result<()> {
        for r in &self.records {
            for p in r.paths() {
                let full = self.resolve(p);
                if !full.is_file() {
                    return Err(Error::Manifest(format!(
                        "case {:?}: referenced file {} does not exist",
                        r.case_id,
                        full.display()
                    )));
                }
            }
        }
        Ok(())
    }
}

fn check_unique(records: &[CaseRecord]) -> Result<()> {
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert(r.case_id.as_str()) {
            return Err(Error::Manifest(format!("duplicate case_id {:?}", r.case_id)));
        }
    }
    Ok(())
}

fn check_columns<'a>(columns: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let present: HashSet<&str> = columns.into_iter().collect();
    let missing: Vec<&str> = MANDATORY_COLUMNS.iter().copied().filter(|c| !present.contains(c)).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::Manifest(format!("missing mandatory column(s): {}", missing.join(", "))))
    }
}

pub fn parse_manifest_csv(text: &str, base_dir: impl Into<PathBuf>) -> Result<Manifest> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::Headers).from_reader(text.as_bytes());
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    check_columns(headers.iter().map(String::as_str))?;
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let fields: BTreeMap<String, String> =
            headers.iter().cloned().zip(row.iter().map(str::to_string)).collect();
        records.push(CaseRecord::from_fields(&fields)?);
    }
    Manifest::new(base_dir, records)
}

/// JSON manifests are an array of objects keyed by the CSV column names.
pub fn parse_manifest_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Manifest> {
    let rows: Vec<serde_json::Map<String, serde_json::Value>> = serde_json::from_str(text)?;
    let mut records = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        check_columns(row.keys().map(String::as_str))
            .map_err(|e| Error::Manifest(format!("row {i}: {e}")))?;
        let fields = row
            .iter()
            .map(|(k, v)| {
                let s = match v {
                    serde_json::Value::Null => String::new(),
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                (k.clone(), s)
            })
            .collect();
        records.push(CaseRecord::from_fields(&fields)?);
    }
    Manifest::new(base_dir, records)
}

/// Loads a CSV or JSON manifest, chosen by extension.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("json") => parse_manifest_json(&text, base),
        _ => parse_manifest_csv(&text, base),
    }
}

/// CSV with the documented columns first, then extra columns in name order.
pub fn manifest_csv(records: &[CaseRecord]) -> Result<String> {
    let extra: std::collections::BTreeSet<&String> = records.iter().flat_map(|r| r.extra.keys()).collect();
    let mut header: Vec<String> = ["case_id", "cohort", "pathology", "country", "age", "sex", "split"]
        .into_iter()
        .chain(["t1", "t2", "flair", "t1ce", "gt_labels", "pred_labels", "pred_prob"])
        .map(String::from)
        .collect();
    header.extend(extra.into_iter().cloned());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for r in records {
        let f = r.to_fields();
        w.write_record(header.iter().map(|h| f.get(h).map(String::as_str).unwrap_or("")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Manifest(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[CaseRecord]) -> Result<()> {
    check_unique(records)?;
    let path = path.as_ref();
    std::fs::write(path, manifest_csv(records)?).map_err(|e| Error::io(path, e))
}
