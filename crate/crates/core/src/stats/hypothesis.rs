use serde::{Deserialize, Serialize};

use super::descriptive::mean;
use super::special::{chi2_sf, f_sf, t_two_sided};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Df {
    One(f64),
    Two(f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test_name: String,
    pub statistic: f64,
    pub df: Df,
    pub p: f64,
    pub p_bonferroni: f64,
    pub family_size: usize,
}

impl TestResult {
    fn new(name: &str, statistic: f64, df: Df, p: f64) -> Self {
        let p = p.clamp(0.0, 1.0);
        TestResult { test_name: name.to_string(), statistic, df, p, p_bonferroni: p, family_size: 1 }
    }

    pub fn with_family(mut self, family_size: usize) -> Self {
        self.family_size = family_size.max(1);
        self.p_bonferroni = bonferroni(self.p, self.family_size);
        self
    }
}

/// `min(1, m p)`.
pub fn bonferroni(p: f64, family_size: usize) -> f64 {
    (p * family_size.max(1) as f64).min(1.0)
}

/// Sets every result's family size to the length of the slice.
pub fn apply_bonferroni(results: &mut [TestResult]) {
    let m = results.len();
    for r in results.iter_mut() {
        *r = r.clone().with_family(m);
    }
}

fn check_groups(groups: &[Vec<f64>]) -> Result<()> {
    if groups.len() < 2 {
        return Err(Error::SampleSize { needed: 2, got: groups.len() });
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(Error::SampleSize { needed: 2, got: g.len() });
    }
    if groups.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Validation("test input contains non-finite values".into()));
    }
    Ok(())
}

/// Between- and within-group sums of squares.
fn sums_of_squares(groups: &[Vec<f64>]) -> (f64, f64) {
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let grand = mean(&all);
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let m = mean(g);
        ssb += g.len() as f64 * (m - grand).powi(2);
        ssw += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    (ssb, ssw)
}

fn f_test(name: &str, groups: &[Vec<f64>]) -> Result<TestResult> {
    check_groups(groups)?;
    let k = groups.len() as f64;
    let n: f64 = groups.iter().map(|g| g.len() as f64).sum();
    let (ssb, ssw) = sums_of_squares(groups);
    let (d1, d2) = (k - 1.0, n - k);
    if ssw == 0.0 {
        if ssb == 0.0 {
            return Err(Error::Degenerate(format!("{name}: all values identical, F undefined")));
        }
        return Ok(TestResult::new(name, f64::INFINITY, Df::Two(d1, d2), 0.0));
    }
    let f = (ssb / d1) / (ssw / d2);
    Ok(TestResult::new(name, f, Df::Two(d1, d2), f_sf(f, d1, d2)))
}

/// Classic one-way ANOVA F test.
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<TestResult> {
    f_test("anova_oneway", groups)
}

/// Levene's test, mean-centred: ANOVA on absolute deviations from each
/// group's mean.
pub fn levene(groups: &[Vec<f64>]) -> Result<TestResult> {
    check_groups(groups)?;
    let dev: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let m = mean(g);
            g.iter().map(|v| (v - m).abs()).collect()
        })
        .collect();
    f_test("levene", &dev)
}

fn var(g: &[f64]) -> f64 {
    let m = mean(g);
    g.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (g.len() as f64 - 1.0)
}

/// Welch's unequal-variance t test with Welch-Satterthwaite df.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<TestResult> {
    check_groups(&[a.to_vec(), b.to_vec()])?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (var(a) / na, var(b) / nb);
    let diff = mean(a) - mean(b);
    let se2 = va + vb;
    if se2 == 0.0 {
        if diff == 0.0 {
            return Ok(TestResult::new("welch_t", 0.0, Df::One(na + nb - 2.0), 1.0));
        }
        return Err(Error::Degenerate("welch_t: both groups constant with different means".into()));
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok(TestResult::new("welch_t", t, Df::One(df), t_two_sided(t, df)))
}

/// Student's t test with pooled variance.
pub fn pooled_t(a: &[f64], b: &[f64]) -> Result<TestResult> {
    check_groups(&[a.to_vec(), b.to_vec()])?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let df = na + nb - 2.0;
    let sp2 = ((na - 1.0) * var(a) + (nb - 1.0) * var(b)) / df;
    let diff = mean(a) - mean(b);
    if sp2 == 0.0 {
        if diff == 0.0 {
            return Ok(TestResult::new("pooled_t", 0.0, Df::One(df), 1.0));
        }
        return Err(Error::Degenerate("pooled_t: both groups constant with different means".into()));
    }
    let t = diff / (sp2 * (1.0 / na + 1.0 / nb)).sqrt();
    Ok(TestResult::new("pooled_t", t, Df::One(df), t_two_sided(t, df)))
}

/// Pearson chi-square test of independence on an r x c table of counts.
/// Rows or columns with zero total are dropped first.
pub fn chi_square(table: &[Vec<u64>]) -> Result<TestResult> {
    let width = table.first().map_or(0, |r| r.len());
    if table.iter().any(|r| r.len() != width) {
        return Err(Error::Validation("contingency table rows differ in length".into()));
    }
    let rows: Vec<&Vec<u64>> = table.iter().filter(|r| r.iter().sum::<u64>() > 0).collect();
    let cols: Vec<usize> = (0..width).filter(|&j| rows.iter().map(|r| r[j]).sum::<u64>() > 0).collect();
    if rows.len() < 2 || cols.len() < 2 {
        return Err(Error::Degenerate("chi-square needs at least 2 non-empty rows and columns".into()));
    }
    let total: f64 = rows.iter().map(|r| cols.iter().map(|&j| r[j]).sum::<u64>() as f64).sum();
    let mut stat = 0.0;
    for r in &rows {
        let row_total: f64 = cols.iter().map(|&j| r[j] as f64).sum();
        for &j in &cols {
            let col_total: f64 = rows.iter().map(|q| q[j] as f64).sum();
            let expected = row_total * col_total / total;
            stat += (r[j] as f64 - expected).powi(2) / expected;
        }
    }
    let df = ((rows.len() - 1) * (cols.len() - 1)) as f64;
    Ok(TestResult::new("chi_square", stat, Df::One(df), chi2_sf(stat, df)))
}

/// Chi-square on a 2 x k table.
pub fn chi_square_2xk(table: &[Vec<u64>; 2]) -> Result<TestResult> {
    chi_square(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn identical_groups_welch() {
        let a = [1.0, 2.0, 4.0, 7.0];
        let r = welch_t(&a, &a).unwrap();
        assert_eq!((r.statistic, r.p), (0.0, 1.0));
    }

    #[test]
    fn anova_hand_dataset() {
        let groups = vec![vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0], vec![6.0, 7.0, 8.0]];
        // Group means 2, 3, 7; grand mean 4. SSB = 3(4 + 1 + 9) = 42, SSW = 3 * 2 = 6.
        let f = (42.0 / 2.0) / (6.0 / 6.0);
        let r = anova_oneway(&groups).unwrap();
        assert!((r.statistic - f).abs() < 1e-10);
        // F(2, 6) tail: I_{6/(6+2F)}(3, 1) = x^3.
        let x: f64 = 6.0 / (6.0 + 2.0 * f);
        assert!((r.p - x.powi(3)).abs() < 1e-10);
        assert_eq!(r.df, Df::Two(2.0, 6.0));
    }

    #[test]
    fn levene_detects_unequal_spread() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let a: Vec<f64> = (0..50).map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut rng)).collect();
        let b: Vec<f64> = (0..50).map(|_| Normal::new(0.0, 5.0).unwrap().sample(&mut rng)).collect();
        assert!(levene(&[a, b]).unwrap().p < 0.01);
    }

    #[test]
    fn identical_values_degenerate() {
        assert!(matches!(anova_oneway(&[vec![2.0, 2.0], vec![2.0, 2.0]]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn bonferroni_examples() {
        assert!((bonferroni(0.01, 5) - 0.05).abs() < 1e-15);
        assert_eq!(bonferroni(0.3, 5), 1.0);
        assert_eq!(bonferroni(0.123, 1), 0.123);
    }

    #[test]
    fn chi_square_2x2() {
        // Every expected count is 25, so chi2 = 4 * (35 - 25)^2 / 25 = 16.
        let r = chi_square_2xk(&[vec![35, 15], vec![15, 35]]).unwrap();
        assert!((r.statistic - 16.0).abs() < 1e-12);
        // With 1 df this is P(|Z| > 4).
        assert!((r.p - 6.334_248_366_623_996e-5).abs() < 1e-15);
        assert_eq!(r.df, Df::One(1.0));
    }

    #[test]
    fn chi_square_balanced_is_zero() {
        let r = chi_square_2xk(&[vec![10, 20, 30], vec![10, 20, 30]]).unwrap();
        assert!(r.statistic.abs() < 1e-12 && (r.p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn serialized_fields() {
        let r = welch_t(&[1.0, 2.0, 3.0], &[2.0, 4.0, 9.0]).unwrap().with_family(3);
        let v = serde_json::to_value(&r).unwrap();
        for key in ["test_name", "statistic", "df", "p", "p_bonferroni", "family_size"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    proptest! {
        #[test]
        fn two_group_anova_is_pooled_t_squared(
            a in prop::collection::vec(-50.0f64..50.0, 2..15),
            b in prop::collection::vec(-50.0f64..50.0, 2..15),
        ) {
            let f = anova_oneway(&[a.clone(), b.clone()]);
            let t = pooled_t(&a, &b);
            if let (Ok(f), Ok(t)) = (f, t) {
                if f.statistic.is_finite() {
                    prop_assert!((f.statistic - t.statistic.powi(2)).abs() <= 1e-9 * f.statistic.max(1.0));
                    prop_assert!((f.p - t.p).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn p_values_in_unit_interval(groups in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2..8), 2..5)) {
            for r in [anova_oneway(&groups), levene(&groups), welch_t(&groups[0], &groups[1])].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&r.p));
            }
        }

        #[test]
        fn bonferroni_monotone(p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0, m1 in 1usize..20, m2 in 1usize..20) {
            let (plo, phi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            let (mlo, mhi) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
            prop_assert!(bonferroni(plo, mlo) <= bonferroni(phi, mlo));
            prop_assert!(bonferroni(plo, mlo) <= bonferroni(plo, mhi));
        }
    }
}
