use enhance_core::equity::{
    build_report, emit_report, evaluate_manifest, load_manifest, report_json, Attribute, EquityCase, EvaluateOptions,
    SplitCheck, StratifyOptions,
};
use enhance_core::phantom::{generate_cohort, CohortSpec, Shape};

fn run(spec: &CohortSpec, dir: &std::path::Path) -> (Vec<EquityCase>, String) {
    let cohort = generate_cohort(spec, dir).unwrap();
    let manifest = load_manifest(&cohort.manifest_path).unwrap();
    let outputs = evaluate_manifest(&manifest, &EvaluateOptions::default()).unwrap();
    let cases: Vec<EquityCase> = outputs.into_iter().map(|o| o.case).collect();
    let opts = StratifyOptions { iterations: 200, ..Default::default() };
    let report = build_report(&cases, &Attribute::ALL, Some(SplitCheck::of(&manifest)), &opts).unwrap();
    emit_report(&report, &cases, &dir.join("report")).unwrap();
    (cases, report_json(&report).unwrap())
}

#[test]
fn phantom_to_report_separates_strata() {
    let mut spec = CohortSpec::two_site(24, 11);
    spec.dims = [48, 48, 48];
    spec.negative_fraction = 1.0 / 6.0;
    for s in &mut spec.strata {
        s.shapes = vec![Shape::Ball { radius: 10.0 }, Shape::Ellipsoid { semi_axes: [14.0, 10.0, 9.0] }];
    }
    let dir = tempfile::tempdir().unwrap();
    let (cases, json) = run(&spec, dir.path());
    assert_eq!(cases.len(), 24);
    assert_eq!(cases.iter().filter(|c| c.evaluation.gt_positive).count(), 20);

    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    let cohort = v["stratifications"].as_array().unwrap().iter().find(|s| s["attribute"] == "cohort").unwrap();
    let strata = cohort["strata"].as_array().unwrap();
    let dice = |i: usize| strata[i]["dice"]["mean"].as_f64().unwrap();
    assert!((dice(0) - 0.8).abs() < 0.05, "site_a {}", dice(0));
    assert!((dice(1) - 0.4).abs() < 0.05, "site_b {}", dice(1));
    let tests = v["tests"].as_array().unwrap().iter().find(|t| t["attribute"] == "cohort").unwrap();
    let anova = &tests["results"][0];
    assert_eq!(anova["test_name"], "anova_dice");
    assert!(anova["p_bonferroni"].as_f64().unwrap() < 1e-3);

    // Every case is positive or negative by construction and the score separates them.
    let roc = &v["overall"]["roc"];
    assert_eq!(roc["auroc"].as_f64(), Some(1.0));
    for f in ["report.json", "report.md", "tables/strata.csv", "tables/tests.csv", "tables/cases.csv"] {
        assert!(dir.path().join("report").join(f).is_file(), "{f}");
    }
}

#[test]
fn pipeline_is_deterministic() {
    let mut spec = CohortSpec::two_site(8, 3);
    spec.dims = [40, 40, 40];
    for s in &mut spec.strata {
        s.shapes = vec![Shape::Ball { radius: 7.0 }, Shape::MultiBall { count: 3, radius: 3.0 }];
    }
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (_, ja) = run(&spec, a.path());
    let (_, jb) = run(&spec, b.path());
    assert_eq!(ja, jb);
    assert_eq!(
        std::fs::read(a.path().join("report/tables/strata.csv")).unwrap(),
        std::fs::read(b.path().join("report/tables/strata.csv")).unwrap()
    );
}

#[test]
fn radiomic_expectations_hold_across_cohort() {
    let mut spec = CohortSpec::two_site(6, 5);
    spec.dims = [48, 48, 48];
    spec.negative_fraction = 0.0;
    spec.size_jitter = 0.0;
    spec.strata[0].shapes = vec![Shape::Ball { radius: 12.0 }, Shape::MultiBall { count: 3, radius: 5.0 }, Shape::Cube { side: 20 }];
    spec.strata[1].shapes = spec.strata[0].shapes.clone();
    let dir = tempfile::tempdir().unwrap();
    let cohort = generate_cohort(&spec, dir.path()).unwrap();
    let manifest = load_manifest(&cohort.manifest_path).unwrap();
    let outputs = evaluate_manifest(&manifest, &EvaluateOptions::default()).unwrap();
    for (out, gen) in outputs.iter().zip(&cohort.cases) {
        let f = out.radiomics.as_ref().unwrap();
        let e = &gen.expected;
        if let Some(n) = e.n_components {
            assert_eq!(f.n_components, n, "{}", gen.case_id);
        }
        if let Some(b) = e.sphericity {
            assert!(b.contains(f.sphericity), "{} sphericity {}", gen.case_id, f.sphericity);
        }
        if let Some(c) = e.category {
            assert_eq!(f.category, Some(c), "{}", gen.case_id);
        }
        assert_eq!(out.case.category, f.category);
    }
}
