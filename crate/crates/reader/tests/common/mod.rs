#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use enhance_core::grid::{Geometry, Grid, LabelGrid, VoxelGrid, ENHANCING};
use enhance_core::volume_io::save;

pub const DIMS: [usize; 3] = [6, 5, 4];

/// The model errs on every fifth case.
pub fn model_positive(i: usize, gt_positive: bool) -> bool {
    if i % 5 == 0 {
        !gt_positive
    } else {
        gt_positive
    }
}

/// Writes `n_pos` gt-positive and `n_neg` gt-negative test cases plus two
/// training cases, and returns the manifest path.
pub fn write_pool(dir: &Path, n_pos: usize, n_neg: usize) -> PathBuf {
    let geom = Geometry::isotropic(DIMS, 1.0).unwrap();
    let mut csv = String::from("case_id,cohort,pathology,country,split,t1,t2,flair,gt_labels,pred_labels\n");
    for i in 0..n_pos + n_neg + 2 {
        let id = format!("subj{i:03}");
        let split = if i >= n_pos + n_neg { "train" } else { "test" };
        let gt_pos = i < n_pos;
        let label = |pos: bool| -> LabelGrid {
            Grid::from_fn(geom.clone(), |x, y, z| {
                if pos && (x, y, z) == (2, 2, 2) {
                    ENHANCING
                } else if (1..5).contains(&x) && (1..4).contains(&y) {
                    1
                } else {
                    0
                }
            })
            .unwrap()
        };
        let case_dir = dir.join(&id);
        std::fs::create_dir_all(&case_dir).unwrap();
        for (k, seq) in ["t1", "t2", "flair"].iter().enumerate() {
            let img: VoxelGrid = Grid::from_fn(geom.clone(), |x, y, z| (1 + (x * (k + 2) + 3 * y + 7 * z + i) % 13) as f32).unwrap();
            save(&img, &case_dir.join(format!("{seq}.nii.gz"))).unwrap();
        }
        save(&label(gt_pos), &case_dir.join("gt.nii.gz")).unwrap();
        save(&label(model_positive(i, gt_pos)), &case_dir.join("pred.nii.gz")).unwrap();
        writeln!(
            csv,
            "{id},site,glioma,nowhere,{split},{id}/t1.nii.gz,{id}/t2.nii.gz,{id}/flair.nii.gz,{id}/gt.nii.gz,{id}/pred.nii.gz"
        )
        .unwrap();
    }
    let path = dir.join("manifest.csv");
    std::fs::write(&path, csv).unwrap();
    path
}

pub fn case_index(case_id: &str) -> usize {
    case_id.trim_start_matches("subj").parse().unwrap()
}

/// Collects every object key and string value of a JSON document.
pub fn keys_and_strings(v: &serde_json::Value, keys: &mut Vec<String>, strings: &mut Vec<String>) {
    match v {
        serde_json::Value::Object(m) => {
            for (k, x) in m {
                keys.push(k.clone());
                keys_and_strings(x, keys, strings);
            }
        }
        serde_json::Value::Array(a) => a.iter().for_each(|x| keys_and_strings(x, keys, strings)),
        serde_json::Value::String(s) => strings.push(s.clone()),
        _ => {}
    }
}

/// Keys that would let a reader infer ground truth, the model call or
/// the case identity.
pub const FORBIDDEN_KEYS: [&str; 12] = [
    "pathology", "gt", "label", "t1ce", "pred", "positive", "case_id", "case_order", "cohort", "country", "model", "seed",
];

pub fn assert_blind(payload: &serde_json::Value, case_ids: &[String]) {
    let (mut keys, mut strings) = (Vec::new(), Vec::new());
    keys_and_strings(payload, &mut keys, &mut strings);
    for k in &keys {
        let lower = k.to_lowercase();
        for f in FORBIDDEN_KEYS {
            assert!(!lower.contains(f), "client-visible key {k:?} matches {f:?} in {payload}");
        }
    }
    for s in &strings {
        assert!(!s.contains("t1ce"), "t1ce in {payload}");
        for id in case_ids {
            assert!(!s.contains(id.as_str()), "case id {id} leaked in {payload}");
        }
    }
}
