//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use enhance_core::equity::{equity_tests, evaluate_manifest, load_manifest, stratify, Attribute, EquityCase, EvaluateOptions, StratifyOptions};
use enhance_core::grid::{Geometry, Grid, LabelGrid, Mask, ProbGrid, VoxelGrid, ENHANCING};
use enhance_core::metrics::{evaluate_case, roc_pr, ConfusionCounts, DetectionTier};
use enhance_core::morphology::{analyze_lesion, classify, shape_features, Category, Connectivity};
use enhance_core::phantom::{generate_cohort, lesion_mask, CohortSpec, PhantomMetadata, Shape, DEFAULT_CUBE_SIDE};
use enhance_core::stats::regression::Z_95;
use enhance_core::stats::{anova_oneway, bland_altman, bonferroni, fit_logistic, levene, ols_r2, LogisticFit};
use enhance_core::uncertainty::{summarize_case, voxel_entropy};
use enhance_core::volume_io::{parse_intensity, parse_labels, parse_probabilities, save, write_nifti, IntegerMap};
use enhance_reader::{Answer, ReaderService, SessionStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn within(elapsed: Duration, limit_s: u64) -> Check {
    ensure!(elapsed.as_secs_f64() < limit_s as f64, "took {:.1}s, limit {limit_s}s", elapsed.as_secs_f64());
    Ok(format!("{:.1}s < {limit_s}s", elapsed.as_secs_f64()))
}

fn random_mask(rng: &mut ChaCha8Rng) -> Mask {
    let geom = Geometry::isotropic([18, 18, 18], 1.0).unwrap();
    let blobs: Vec<([f64; 3], f64, bool)> = (0..rng.random_range(1..=4))
        .map(|_| {
            let c = [0; 3].map(|_| rng.random_range(6.0..12.0));
            (c, rng.random_range(1.5..5.0), rng.random_bool(0.5))
        })
        .collect();
    Mask::from_fn(geom, |x, y, z| {
        let p = [x as f64, y as f64, z as f64];
        blobs.iter().any(|&(c, r, ball)| {
            if ball {
                (0..3).map(|a| (p[a] - c[a]).powi(2)).sum::<f64>() <= r * r
            } else {
                (0..3).all(|a| (p[a] - c[a]).abs() <= r)
            }
        })
    })
    .unwrap()
}

fn shape_identities() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let f = ok(shape_features(&random_mask(&mut rng)))?;
        worst = worst.max((f.sphericity.powi(3) * f.compactness - 1.0).abs());
    }
    ensure!(worst <= 1e-9, "max |s^3 c - 1| = {worst:e}");

    let geom = ok(Geometry::isotropic([40, 40, 40], 1.0))?;
    let sphere = ok(lesion_mask(&Shape::Ball { radius: 15.0 }, &geom, 0))?;
    let a = ok(analyze_lesion(&sphere, Connectivity::TwentySix))?;
    let f = &a.features;
    let elong = f.elongation.unwrap_or(f64::INFINITY);
    ensure!((0.97..=1.03).contains(&f.sphericity), "sphere sphericity {}", f.sphericity);
    ensure!((0.91..=1.09).contains(&f.compactness), "sphere compactness {}", f.compactness);
    ensure!((0.9..=1.1).contains(&elong), "sphere elongation {elong}");
    ensure!(f.category == Some(Category::WellCircumscribedSingle), "sphere category {:?}", f.category);

    let cube = ok(lesion_mask(&Shape::Cube { side: DEFAULT_CUBE_SIDE }, &geom, 0))?;
    let c = ok(shape_features(&cube))?;
    let target = (std::f64::consts::PI / 6.0).cbrt();
    ensure!((c.sphericity / target - 1.0).abs() <= 0.03, "cube sphericity {} vs {target}", c.sphericity);
    let t = within(start.elapsed(), 30)?;
    Ok(format!(
        "max|s^3c-1|={worst:.1e}; sphere s={:.4} c={:.4} e={elong:.4}; cube s={:.4}; {t}",
        f.sphericity, f.compactness, c.sphericity
    ))
}

fn category_rules() -> Check {
    let cases = [
        (3, 0.5, 0.9, 0.95, Category::Multiple, false),
        (2, 0.75, 0.9, 0.95, Category::Multiple, false),
        (1, 1.0, 0.9, 0.95, Category::WellCircumscribedSingle, false),
        (1, 1.0, 0.4, 0.95, Category::InfiltrativeSingle, false),
        (1, 1.0, 0.6, 0.95, Category::IrregularComplexSingle, true),
    ];
    for (n, frac, s, sol, want, gap) in cases {
        let d = ok(classify(n, frac, s, sol))?;
        ensure!(d.category == want, "n={n} frac={frac} s={s} sol={sol}: got {:?}, want {want:?}", d.category);
        ensure!(d.rule_gap == gap, "n={n} s={s}: rule_gap {}", d.rule_gap);
    }
    ensure!(classify(0, 0.0, 0.9, 0.95).is_err(), "zero components accepted");
    Ok("5/5 examples".into())
}

fn brute_auc(scores: &[(f64, bool)]) -> f64 {
    let (mut half, mut pairs) = (0u64, 0u64);
    for (p, _) in scores.iter().filter(|s| s.1) {
        for (n, _) in scores.iter().filter(|s| !s.1) {
            pairs += 1;
            half += if p > n { 2 } else if p == n { 1 } else { 0 };
        }
    }
    half as f64 / (2 * pairs) as f64
}

fn metric_oracles() -> Check {
    let s = 10usize;
    let geom = ok(Geometry::isotropic([30, 30, 30], 1.0))?;
    for t in 1..=5usize {
        let cube = |dx: usize| -> LabelGrid {
            Grid::from_fn(geom.clone(), |x, y, z| {
                let inside = (5 + dx..5 + dx + s).contains(&x) && (5..5 + s).contains(&y) && (5..5 + s).contains(&z);
                if inside { ENHANCING } else { 1 }
            })
            .unwrap()
        };
        let e = ok(evaluate_case("cube", &cube(0), &cube(t), 0.0))?;
        let want = (s - t) as f64 / s as f64;
        ensure!(e.enhancing_dice() == want, "t={t}: dice {} != {want}", e.enhancing_dice());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let c = ConfusionCounts::new(rng.random_range(0..500), rng.random_range(0..500), rng.random_range(0..500), rng.random_range(0..500));
        let (d, f) = (c.dice(), c.f1());
        ensure!((d - f).abs() <= 1e-12 * d.max(1.0), "{c:?}: dice {d} f1 {f}");
    }

    let mut sets = 0;
    while sets < 200 {
        let n = rng.random_range(2..=20);
        let scores: Vec<(f64, bool)> = (0..n).map(|_| (rng.random_range(0..6) as f64 / 5.0, rng.random_bool(0.5))).collect();
        if scores.iter().all(|s| s.1) || scores.iter().all(|s| !s.1) {
            continue;
        }
        let auc = ok(roc_pr(&scores))?.auroc;
        ensure!(auc == brute_auc(&scores), "{scores:?}: auroc {auc} vs pairs {}", brute_auc(&scores));
        sets += 1;
    }
    Ok("shifted cube t=1..5 exact; 1000 dice=f1; 200 AUROC sets exact".into())
}

fn detection_tiers() -> Check {
    let cases = [
        (0.3, DetectionTier::Acceptable),
        (0.5, DetectionTier::Good),
        (0.7, DetectionTier::Excellent),
        (0.2999, DetectionTier::Below),
        (0.4999, DetectionTier::Acceptable),
        (0.6999, DetectionTier::Good),
    ];
    for (d, want) in cases {
        ensure!(DetectionTier::from_dice(d) == want, "dice {d}: {:?}", DetectionTier::from_dice(d));
    }
    Ok("0.3/0.5/0.7 inclusive".into())
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn logistic_fit() -> Check {
    let start = Instant::now();
    let mut covered = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let vols: Vec<f64> = (0..2000).map(|_| 10f64.powf(rng.random_range(-2.0..2.0))).collect();
        let detected: Vec<bool> = vols.iter().map(|v| rng.random_bool(sigmoid(1.713 * v.log10() - 4.786))).collect();
        let f = ok(fit_logistic(&detected, &vols))?;
        if f.beta - Z_95 * f.se_beta <= 1.713 && 1.713 <= f.beta + Z_95 * f.se_beta {
            covered += 1;
        }
        ensure!(f.or_per_decade == f.beta.exp(), "OR != exp(beta) on run {seed}");
        ensure!(
            f.or_ci == ((f.beta - Z_95 * f.se_beta).exp(), (f.beta + Z_95 * f.se_beta).exp()),
            "CI != exp(beta +- 1.96 se) on run {seed}"
        );
    }
    ensure!(covered >= 90, "beta covered in {covered}/100 runs");

    // Implied se from the published interval, then the interval back from
    // beta. beta is itself rounded to 3 decimals, which moves each bound by
    // up to 0.0005 * bound on top of the bound's own rounding.
    let se = (7.009f64.ln() - 4.389f64.ln()) / (2.0 * Z_95);
    ensure!((se * 1000.0).round() / 1000.0 == 0.119 && (se - 0.1194).abs() < 5e-4, "implied se {se}");
    let fit = LogisticFit::from_coefficients(1.713, -4.786, se);
    ensure!((fit.or_per_decade * 1000.0).round() / 1000.0 == 5.546, "OR {}", fit.or_per_decade);
    for (got, published) in [(fit.or_ci.0, 4.389), (fit.or_ci.1, 7.009)] {
        ensure!((got - published).abs() <= 0.0005 * published + 0.0005, "CI bound {got} vs {published}");
    }
    let t = within(start.elapsed(), 60)?;
    Ok(format!("coverage {covered}/100; implied se {se:.4}; {t}"))
}

fn group_ss(groups: &[Vec<f64>]) -> f64 {
    let all: Vec<f64> = groups.concat();
    let grand = all.iter().sum::<f64>() / all.len() as f64;
    let k = groups.len() as f64;
    let n = all.len() as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (m - grand).powi(2);
        ssw += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    (ssb / (k - 1.0)) / (ssw / (n - k))
}

fn statistics() -> Check {
    let a = vec![2.1, 3.4, 1.9, 4.2, 3.3, 2.8];
    let b = vec![4.0, 5.1, 3.9, 6.2, 4.8];
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (a.iter().sum::<f64>() / na, b.iter().sum::<f64>() / nb);
    let sp2 = (a.iter().map(|v| (v - ma).powi(2)).sum::<f64>() + b.iter().map(|v| (v - mb).powi(2)).sum::<f64>()) / (na + nb - 2.0);
    let t = (ma - mb) / (sp2 * (1.0 / na + 1.0 / nb)).sqrt();
    let f = ok(anova_oneway(&[a, b]))?.statistic;
    ensure!((f - t * t).abs() <= 1e-9, "F {f} vs t^2 {}", t * t);

    let groups = vec![vec![1.0, 2.0, 3.0], vec![4.0, 6.0, 8.0], vec![7.0, 8.0, 12.0]];
    let an = ok(anova_oneway(&groups))?;
    let oracle = group_ss(&groups);
    ensure!((an.statistic - oracle).abs() <= 1e-10, "anova {} vs {oracle}", an.statistic);
    let dev: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let m = g.iter().sum::<f64>() / g.len() as f64;
            g.iter().map(|v| (v - m).abs()).collect()
        })
        .collect();
    let lev = ok(levene(&groups))?;
    let lev_oracle = group_ss(&dev);
    ensure!((lev.statistic - lev_oracle).abs() <= 1e-10, "levene {} vs {lev_oracle}", lev.statistic);

    ensure!(bonferroni(0.4, 3) == 1.0 && bonferroni(0.01, 3) == 0.03, "bonferroni clamp");
    Ok(format!("F-t^2 {:.1e}; anova F={:.6}; levene W={:.6}", (f - t * t).abs(), an.statistic, lev.statistic))
}

fn volume_agreement() -> Check {
    let geom = ok(Geometry::isotropic([48, 48, 48], 1.0))?;
    let (mut gt_v, mut pred_v) = (Vec::new(), Vec::new());
    for (i, side) in [5usize, 10, 15, 20].into_iter().enumerate() {
        let lesion = ok(lesion_mask(&Shape::Cube { side }, &geom, i as u64))?;
        // A 2000-voxel block well away from the lesion adds exactly 2 cm³.
        let block = |x: usize, y: usize, z: usize| (36..46).contains(&x) && (2..12).contains(&y) && (2..22).contains(&z);
        let gt: LabelGrid = ok(Grid::from_fn(geom.clone(), |x, y, z| if *lesion.get(x, y, z) { ENHANCING } else { 1 }))?;
        let pred: LabelGrid =
            ok(Grid::from_fn(geom.clone(), |x, y, z| if *lesion.get(x, y, z) || block(x, y, z) { ENHANCING } else { 1 }))?;
        let e = ok(evaluate_case(&format!("cube{side}"), &gt, &pred, 0.0))?;
        gt_v.push(e.gt_enh_volume_cm3);
        pred_v.push(e.pred_enh_volume_cm3);
    }
    let fit = ok(ols_r2(&gt_v, &pred_v))?;
    ensure!(fit.r2 == 1.0, "r2 {}", fit.r2);
    let ba = ok(bland_altman(&pred_v, &gt_v))?;
    ensure!((ba.mean_diff, ba.loa_lo, ba.loa_hi) == (2.0, 2.0, 2.0), "bland-altman {ba:?}");
    Ok("r2=1, BA=(2,2,2)".into())
}

fn uncertainty() -> Check {
    ensure!(voxel_entropy(&[1.0, 0.0, 0.0, 0.0]) == 0.0, "one-hot");
    ensure!(voxel_entropy(&[0.25; 4]) == 1.0, "uniform {}", voxel_entropy(&[0.25; 4]));
    ensure!(voxel_entropy(&[0.5, 0.5, 0.0, 0.0]) == 0.5, "half {}", voxel_entropy(&[0.5, 0.5, 0.0, 0.0]));

    let geom = ok(Geometry::isotropic([4, 4, 4], 1.0))?;
    let pred: LabelGrid = ok(Grid::filled(geom.clone(), 1))?;
    let brain: Mask = ok(Grid::filled(geom.clone(), true))?;
    let flag = |p: [f32; 4]| -> Result<bool, String> {
        let prob: ProbGrid = ok(Grid::filled(geom.clone(), p))?;
        Ok(ok(summarize_case(&prob, &pred, &brain))?.high_uncertainty)
    };
    ensure!(flag([0.25; 4])?, "uniform map not flagged");
    ensure!(!flag([0.5, 0.5, 0.0, 0.0])?, "entropy exactly 0.5 flagged");
    ensure!(!flag([1.0, 0.0, 0.0, 0.0])?, "one-hot map flagged");
    Ok("0 / 1 / 0.5 exact; flag is strict > 0.5".into())
}

fn run_cohort(spec: &CohortSpec, dir: &Path) -> Result<Vec<EquityCase>, String> {
    let cohort = ok(generate_cohort(spec, dir))?;
    let manifest = ok(load_manifest(&cohort.manifest_path))?;
    let out = ok(evaluate_manifest(&manifest, &EvaluateOptions::default()))?;
    Ok(out.into_iter().map(|o| o.case).collect())
}

fn equity() -> Check {
    let mut spec = CohortSpec::two_site(60, 21);
    spec.dims = [48, 48, 48];
    let mut third = spec.strata[0].clone();
    third.metadata = PhantomMetadata { cohort: "site_c".into(), ..third.metadata };
    third.target_dice = Some(0.6);
    spec.strata.push(third);
    for s in &mut spec.strata {
        s.shapes = vec![Shape::Ball { radius: 9.0 }, Shape::Ellipsoid { semi_axes: [12.0, 9.0, 7.0] }];
    }
    let dir = ok(tempfile::tempdir())?;
    let cases = run_cohort(&spec, dir.path())?;
    ensure!(cases.len() == 60, "{} cases", cases.len());
    let opts = StratifyOptions { iterations: 200, ..Default::default() };
    let strat = ok(stratify(&cases, Attribute::Cohort, &opts))?;
    ensure!(strat.strata.len() == 3, "{} strata", strat.strata.len());
    let dice: Vec<f64> = cases.iter().filter(|c| c.evaluation.gt_positive).map(|c| c.evaluation.enhancing_dice()).collect();
    let pooled = dice.iter().sum::<f64>() / dice.len() as f64;
    let n: usize = strat.strata.iter().map(|s| s.dice.n).sum();
    let recomposed = strat.strata.iter().map(|s| s.dice.n as f64 * s.dice.mean).sum::<f64>() / n as f64;
    ensure!(n == dice.len(), "strata cover {n} of {} lesions", dice.len());
    ensure!((recomposed - pooled).abs() <= 1e-9, "recomposed {recomposed} vs pooled {pooled}");

    let mut two = CohortSpec::two_site(24, 11);
    two.dims = [48, 48, 48];
    two.negative_fraction = 1.0 / 6.0;
    for s in &mut two.strata {
        s.shapes = vec![Shape::Ball { radius: 10.0 }, Shape::Ellipsoid { semi_axes: [14.0, 10.0, 9.0] }];
    }
    let dir2 = ok(tempfile::tempdir())?;
    let cases2 = run_cohort(&two, dir2.path())?;
    let strat2 = ok(stratify(&cases2, Attribute::Cohort, &opts))?;
    let tests = ok(equity_tests(&cases2, &strat2))?;
    let anova = tests.results.iter().find(|r| r.test_name == "anova_dice").ok_or("no anova_dice result")?;
    ensure!(anova.p_bonferroni < 1e-3, "anova p_bonferroni {}", anova.p_bonferroni);
    let means: Vec<String> = strat2.strata.iter().map(|s| format!("{}={:.3}", s.stratum, s.dice.mean)).collect();
    Ok(format!(
        "|recomposed-pooled|={:.1e}; {}; p_bonf={:.2e}",
        (recomposed - pooled).abs(),
        means.join(" "),
        anova.p_bonferroni
    ))
}

fn nifti_round_trip() -> Check {
    let geom = ok(Geometry::with_spacing([7, 5, 3], [0.75, 1.25, 2.5]))?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let intensity: VoxelGrid = ok(Grid::new(geom.clone(), (0..geom.len()).map(|_| rng.random_range(-1e4f32..1e4)).collect()))?;
    let labels: LabelGrid = ok(Grid::new(geom.clone(), (0..geom.len()).map(|_| rng.random_range(0..4u8)).collect()))?;
    let probs: ProbGrid = ok(Grid::new(
        geom.clone(),
        (0..geom.len())
            .map(|_| {
                let raw = [0; 4].map(|_| rng.random_range(0.0f32..1.0));
                let s: f32 = raw.iter().sum();
                raw.map(|v| v / s)
            })
            .collect(),
    ))?;
    for gzip in [false, true] {
        let bytes = write_nifti(&intensity, gzip);
        let back = ok(parse_intensity(&bytes))?;
        ensure!(back.geometry() == intensity.geometry(), "intensity geometry (gzip={gzip})");
        ensure!(
            back.data().iter().zip(intensity.data()).all(|(a, b)| a.to_bits() == b.to_bits()),
            "intensity values (gzip={gzip})"
        );
        ensure!(write_nifti(&back, gzip) == bytes, "intensity bytes (gzip={gzip})");

        let bytes = write_nifti(&labels, gzip);
        let back = ok(parse_labels(&bytes))?;
        ensure!(back == labels && write_nifti(&back, gzip) == bytes, "labels (gzip={gzip})");

        let bytes = write_nifti(&probs, gzip);
        let back = ok(parse_probabilities(&bytes))?;
        ensure!(
            back.data().iter().flatten().zip(probs.data().iter().flatten()).all(|(a, b)| a.to_bits() == b.to_bits()),
            "probability values (gzip={gzip})"
        );
        ensure!(write_nifti(&back, gzip) == bytes, "probability bytes (gzip={gzip})");
    }
    for bad in [4u32, 7, 255] {
        let mut values = vec![1u32; geom.len()];
        values[geom.len() / 2] = bad;
        let bytes = write_nifti(&IntegerMap { geometry: &geom, values: &values }, true);
        ensure!(parse_labels(&bytes).is_err(), "label value {bad} accepted");
    }
    Ok("intensity/labels/probabilities x plain/gzip; labels 4,7,255 rejected".into())
}

fn enhance(args: &[&str]) -> Result<(), String> {
    let o = ok(Command::new(env!("CARGO_BIN_EXE_enhance")).args(args).env("RUST_LOG", "warn").output())?;
    ensure!(o.status.success(), "enhance {args:?}: {}", String::from_utf8_lossy(&o.stderr));
    Ok(())
}

fn pipeline_once(dir: &Path) -> Result<Vec<u8>, String> {
    let p = |s: &str| dir.join(s).to_str().unwrap().to_string();
    enhance(&["--seed", "20240601", "phantom", "--out", &p("data"), "--n", "50", "--size", "64"])?;
    let manifest = p("data/manifest.csv");
    enhance(&["--seed", "20240601", "evaluate", "-m", &manifest, "-o", &p("eval")])?;
    enhance(&["--seed", "20240601", "equity", "-m", &manifest, "-o", &p("equity")])?;
    ok(std::fs::read(dir.join("equity/report.json")))
}

fn end_to_end() -> Check {
    let start = Instant::now();
    let (a, b) = (ok(tempfile::tempdir())?, ok(tempfile::tempdir())?);
    let ra = pipeline_once(a.path())?;
    let rb = pipeline_once(b.path())?;
    ensure!(ra == rb, "report.json differs between runs");
    let t = within(start.elapsed(), 120)?;
    Ok(format!("report.json identical ({} bytes); {t}", ra.len()))
}

fn write_reader_pool(dir: &Path, n_pos: usize, n_neg: usize) -> PathBuf {
    let geom = Geometry::isotropic([6, 5, 4], 1.0).unwrap();
    let mut csv = String::from("case_id,cohort,pathology,country,split,t1,t2,flair,gt_labels,pred_labels\n");
    for i in 0..n_pos + n_neg {
        let id = format!("subj{i:03}");
        let gt_pos = i < n_pos;
        // The model errs on every fifth case.
        let model_pos = if i % 5 == 0 { !gt_pos } else { gt_pos };
        let label = |pos: bool| -> LabelGrid {
            Grid::from_fn(geom.clone(), |x, y, z| if pos && (x, y, z) == (2, 2, 2) { ENHANCING } else { 1 }).unwrap()
        };
        let case_dir = dir.join(&id);
        std::fs::create_dir_all(&case_dir).unwrap();
        for (k, seq) in ["t1", "t2", "flair"].iter().enumerate() {
            let img: VoxelGrid = Grid::from_fn(geom.clone(), |x, y, z| (1 + (x * (k + 2) + 3 * y + 7 * z + i) % 13) as f32).unwrap();
            save(&img, &case_dir.join(format!("{seq}.nii"))).unwrap();
        }
        save(&label(gt_pos), &case_dir.join("gt.nii")).unwrap();
        save(&label(model_pos), &case_dir.join("pred.nii")).unwrap();
        writeln!(csv, "{id},site,glioma,nowhere,test,{id}/t1.nii,{id}/t2.nii,{id}/flair.nii,{id}/gt.nii,{id}/pred.nii").unwrap();
    }
    let path = dir.join("manifest.csv");
    std::fs::write(&path, csv).unwrap();
    path
}

const FORBIDDEN_KEYS: [&str; 12] =
    ["pathology", "gt", "label", "t1ce", "pred", "positive", "case_id", "case_order", "cohort", "country", "model", "seed"];

fn blind(v: &serde_json::Value, case_ids: &[String]) -> Result<(), String> {
    match v {
        serde_json::Value::Object(m) => {
            for (k, x) in m {
                let lower = k.to_lowercase();
                if let Some(f) = FORBIDDEN_KEYS.iter().find(|f| lower.contains(*f)) {
                    return Err(format!("client-visible key {k:?} matches {f:?}"));
                }
                blind(x, case_ids)?;
            }
        }
        serde_json::Value::Array(a) => a.iter().try_for_each(|x| blind(x, case_ids))?,
        serde_json::Value::String(s) => {
            ensure!(!s.contains("t1ce"), "t1ce in payload");
            if let Some(id) = case_ids.iter().find(|id| s.contains(id.as_str())) {
                return Err(format!("case id {id} leaked"));
            }
        }
        _ => {}
    }
    Ok(())
}

fn index(case_id: &str) -> usize {
    case_id.trim_start_matches("subj").parse().unwrap()
}

fn reader_study() -> Check {
    let dir = ok(tempfile::tempdir())?;
    let manifest = write_reader_pool(&dir.path().join("data"), 60, 60);
    let journal = dir.path().join("journal");
    let seed = 20240601;
    let all_ids: Vec<String> = (0..120).map(|i| format!("subj{i:03}")).collect();

    let (id, order, wrong, before) = {
        let svc = ok(ReaderService::from_manifest(&manifest, &journal, seed))?;
        let view = ok(svc.create_session("reader-x", Some(11), false))?;
        ok(blind(&ok(serde_json::to_value(&view))?, &all_ids))?;
        let id = view.session_id;
        let order = ok(svc.session_state(&id))?.session.case_order;
        let positives = order.iter().filter(|c| index(c) < 60).count();
        ensure!(order.len() == 100 && positives == 50, "{} cases, {positives} positive", order.len());

        // Wrong on 15 cases the model gets right and 5 it gets wrong.
        let model_right: Vec<&String> = order.iter().filter(|c| index(c) % 5 != 0).take(15).collect();
        let model_wrong: Vec<&String> = order.iter().filter(|c| index(c) % 5 == 0).take(5).collect();
        let wrong: Vec<String> = model_right.into_iter().chain(model_wrong).cloned().collect();
        for _ in 0..40 {
            let d = ok(svc.next_case(&id))?;
            ok(blind(&ok(serde_json::to_value(&d))?, &all_ids))?;
            let case = &order[d.position];
            let yes = (index(case) < 60) != wrong.contains(case);
            let ack = ok(svc.record_response(&id, &d.token, if yes { Answer::Yes } else { Answer::No }, 900))?;
            ok(blind(&ok(serde_json::to_value(&ack))?, &all_ids))?;
        }
        let before = ok(svc.session_state(&id))?;
        (id, order, wrong, before)
    };

    let svc = ok(ReaderService::from_manifest(&manifest, &journal, seed))?;
    let after = ok(svc.session_state(&id))?;
    ensure!(after == before && after.session.cursor == 40, "replayed state differs (cursor {})", after.session.cursor);
    for _ in 40..100 {
        let d = ok(svc.next_case(&id))?;
        let case = &order[d.position];
        let yes = (index(case) < 60) != wrong.contains(case);
        ok(svc.record_response(&id, &d.token, if yes { Answer::Yes } else { Answer::No }, 900))?;
    }
    ensure!(ok(svc.session_view(&id))?.status == SessionStatus::Complete, "session not complete");

    let report = ok(svc.session_report(&id))?;
    let t = report.cross_table;
    let n_model_wrong = order.iter().filter(|c| index(c) % 5 == 0).count();
    ensure!(t.total() == 100, "cross table sums to {}", t.total());
    ensure!(
        (t.reader_wrong_model_right, t.both_wrong, t.model_wrong_reader_right, t.both_right)
            == (15, 5, n_model_wrong - 5, 80 - (n_model_wrong - 5)),
        "cross table {t:?} (model wrong on {n_model_wrong})"
    );
    Ok(format!(
        "50/50; cross table {}/{}/{}/{}; replay at cursor 40; payloads blind",
        t.both_right, t.reader_wrong_model_right, t.model_wrong_reader_right, t.both_wrong
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 12] = [
        ("shape-formula identities", shape_identities),
        ("category rules", category_rules),
        ("metric oracles", metric_oracles),
        ("detection tiers", detection_tiers),
        ("logistic fit", logistic_fit),
        ("statistics vs oracles", statistics),
        ("volume agreement", volume_agreement),
        ("uncertainty", uncertainty),
        ("equity recomposition", equity),
        ("nifti round trip", nifti_round_trip),
        ("end-to-end determinism", end_to_end),
        ("reader-study service", reader_study),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name:<26} [{secs:6.1}s] {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<26} [{secs:6.1}s] {why}");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
