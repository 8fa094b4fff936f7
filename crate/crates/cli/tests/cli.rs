use std::path::Path;
use std::process::{Command, Output};

use enhance_core::grid::{Geometry, Grid, LabelGrid, VoxelGrid};
use enhance_core::volume_io::save;

fn enhance(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_enhance")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn phantom(dir: &Path, extra: &[&str]) -> String {
    let out = dir.join("data");
    let mut args = vec!["phantom", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = enhance(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    out.join("manifest.csv").to_str().unwrap().to_string()
}

#[test]
fn phantom_then_evaluate_writes_one_json_per_case() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = phantom(dir.path(), &["--n", "20", "--seed", "7"]);
    let out = dir.path().join("eval");
    let o = enhance(&["evaluate", "-m", &manifest, "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let jsons = std::fs::read_dir(out.join("cases")).unwrap().filter(|e| {
        e.as_ref().unwrap().path().extension().is_some_and(|x| x == "json")
    });
    assert_eq!(jsons.count(), 20);
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("evaluation.json")).unwrap()).unwrap();
    assert_eq!(summary["n_cases"], 20);
    assert_eq!(summary["provenance"]["seed"], enhance_core::stats::DEFAULT_SEED);
    assert_eq!(summary["provenance"]["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(summary["provenance"]["manifest_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(std::fs::read_to_string(out.join("cases.csv")).unwrap().lines().count(), 21);
}

fn write_mismatched_case(dir: &Path) -> String {
    let small = Geometry::isotropic([8, 8, 8], 1.0).unwrap();
    let large = Geometry::isotropic([9, 8, 8], 1.0).unwrap();
    let img: VoxelGrid = Grid::filled(small.clone(), 1.0).unwrap();
    for s in ["t1", "t2", "flair"] {
        save(&img, &dir.join(format!("{s}.nii"))).unwrap();
    }
    let gt: LabelGrid = Grid::filled(small, 1).unwrap();
    let pred: LabelGrid = Grid::filled(large, 1).unwrap();
    save(&gt, &dir.join("gt.nii")).unwrap();
    save(&pred, &dir.join("pred.nii")).unwrap();
    let manifest = dir.join("manifest.csv");
    std::fs::write(
        &manifest,
        "case_id,cohort,pathology,country,split,t1,t2,flair,gt_labels,pred_labels\n\
         a,site,glioma,x,test,t1.nii,t2.nii,flair.nii,gt.nii,pred.nii\n",
    )
    .unwrap();
    manifest.to_str().unwrap().to_string()
}

#[test]
fn mismatched_geometry_exits_one_with_alignment_message() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_mismatched_case(dir.path());
    let out = dir.path().join("out");
    let o = enhance(&["evaluate", "-m", &manifest, "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("not aligned"), "{}", stderr(&o));

    let o = enhance(&["--json-errors", "evaluate", "-m", &manifest, "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let body: serde_json::Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(body["error"]["class"], "validation");
    assert_eq!(body["error"]["exit_code"], 1);
    assert!(body["error"]["message"].as_str().unwrap().contains("not aligned"));
}

#[test]
fn detect_fit_on_single_class_cohort_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = phantom(dir.path(), &["--n", "12", "--negative-fraction", "0", "--target-dice", "0.9"]);
    let out = dir.path().join("fit");
    let o = enhance(&["detect-fit", "-m", &manifest, "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("both outcomes"), "{}", stderr(&o));
}

#[test]
fn usage_and_io_errors_map_to_exit_codes() {
    let o = enhance(&["evaluate", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
    let o = enhance(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let help = String::from_utf8_lossy(&o.stdout);
    for sub in ["evaluate", "radiomics", "equity", "detect-fit", "uncertainty", "phantom", "dedup", "serve"] {
        assert!(help.contains(sub), "{sub} missing from --help");
    }
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.csv");
    let o = enhance(&["equity", "-m", missing.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn strict_flag_checks_files_before_processing() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_mismatched_case(dir.path());
    std::fs::remove_file(dir.path().join("t2.nii")).unwrap();
    let out = dir.path().join("out");
    let o = enhance(&["evaluate", "--strict", "-m", &manifest, "-o", out.to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("t2.nii"), "{}", stderr(&o));
}

#[test]
fn remaining_subcommands_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = phantom(dir.path(), &["--n", "10", "--seed", "3"]);
    let run = |args: &[&str]| {
        let o = enhance(args);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
    };
    let out = |name: &str| dir.path().join(name).to_str().unwrap().to_string();

    run(&["radiomics", "-m", &manifest, "-o", &out("rad")]);
    let rad = std::fs::read_to_string(dir.path().join("rad/radiomics.csv")).unwrap();
    assert!(rad.starts_with("case_id,n_components,volume_cm3"));
    assert_eq!(rad.lines().count(), 1 + 8);
    let cats: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("rad/categories.json")).unwrap()).unwrap();
    assert_eq!(cats["no_lesion"].as_array().unwrap().len(), 2);

    run(&["uncertainty", "-m", &manifest, "-o", &out("unc")]);
    let unc = std::fs::read_to_string(dir.path().join("unc/uncertainty.csv")).unwrap();
    assert_eq!(unc.lines().count(), 11);

    run(&["dedup", "-m", &manifest, "-o", &out("dup"), "--threshold", "0.95"]);
    let dup: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("dup/dedup.json")).unwrap()).unwrap();
    assert_eq!(dup["n_masks"], 10);
    assert!(dir.path().join("dup/dedup.csv").is_file());

    run(&["--seed", "5", "equity", "-m", &manifest, "-o", &out("eq"), "--iterations", "50", "--attributes", "cohort,volume_bin", "--bins", "split30"]);
    let rep: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("eq/report.json")).unwrap()).unwrap();
    assert_eq!(rep["seed"], 5);
    assert_eq!(rep["provenance"]["seed"], "5");
    assert_eq!(rep["stratifications"].as_array().unwrap().len(), 2);

    let o = enhance(&["equity", "-m", &manifest, "-o", &out("bad"), "--attributes", "shoe_size"]);
    assert_eq!(o.status.code(), Some(1));
}
