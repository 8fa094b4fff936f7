use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Mask;

pub const DUPLICATE_R: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicatePair {
    pub case_a: String,
    pub case_b: String,
    pub r: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DedupReport {
    /// Pairs with r above the threshold, highest r first.
    pub flagged: Vec<DuplicatePair>,
    /// Empty or full masks, which have no defined correlation.
    pub excluded: Vec<String>,
    pub threshold: f64,
}

/// Pearson correlation of two binary vectors from their counts.
fn binary_pearson(n: f64, na: f64, nb: f64, nab: f64) -> f64 {
    (n * nab - na * nb) / ((na * (n - na)) * (nb * (n - nb))).sqrt()
}

/// Correlates every pair of masks voxel-wise and returns the pairs with
/// r > `threshold`.
pub fn duplicate_scan(masks: &[(String, Mask)], threshold: f64) -> Result<DedupReport> {
    let Some((_, first)) = masks.first() else {
        return Ok(DedupReport { threshold, ..Default::default() });
    };
    for (id, m) in masks {
        first.geometry().ensure_aligned(m.geometry()).map_err(|_| {
            Error::Validation(format!("mask {id} is not on the common grid ({})", m.geometry().describe()))
        })?;
    }
    let n = first.len();
    let mut report = DedupReport { threshold, ..Default::default() };
    let mut usable = Vec::new();
    for (id, m) in masks {
        let count = m.count();
        if count == 0 || count == n {
            log::warn!("dedup: mask {id} has zero variance and is skipped");
            report.excluded.push(id.clone());
        } else {
            let on: Vec<u32> = (0..n).filter(|&i| m.data()[i]).map(|i| i as u32).collect();
            usable.push((id, m, on));
        }
    }
    for i in 0..usable.len() {
        for j in i + 1..usable.len() {
            let (a_id, _, a_on) = &usable[i];
            let (b_id, b_mask, b_on) = &usable[j];
            let both = a_on.iter().filter(|&&v| b_mask.data()[v as usize]).count();
            let r = binary_pearson(n as f64, a_on.len() as f64, b_on.len() as f64, both as f64);
            if r > threshold {
                report.flagged.push(DuplicatePair { case_a: a_id.to_string(), case_b: b_id.to_string(), r });
            }
        }
    }
    report.flagged.sort_by(|a, b| b.r.total_cmp(&a.r));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Geometry;

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    fn ball(r: f64) -> Mask {
        Mask::from_fn(Geometry::isotropic([36, 36, 36], 1.0).unwrap(), |x, y, z| {
            let d2 = [x, y, z].iter().map(|&c| (c as f64 - 17.5).powi(2)).sum::<f64>();
            d2 <= r * r
        })
        .unwrap()
    }

    #[test]
    fn identical_masks_flagged() {
        let m = ball(5.0);
        let rep = duplicate_scan(&[("a".into(), m.clone()), ("b".into(), m)], DUPLICATE_R).unwrap();
        assert_eq!(rep.flagged.len(), 1);
        assert!((rep.flagged[0].r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_masks_negative() {
        let geom = Geometry::isotropic([20, 20, 20], 1.0).unwrap();
        let a = Mask::from_fn(geom.clone(), |x, _, _| x < 3).unwrap();
        let b = Mask::from_fn(geom, |x, _, _| x >= 17).unwrap();
        let rep = duplicate_scan(&[("a".into(), a.clone()), ("b".into(), b.clone())], -1.0).unwrap();
        assert!(rep.flagged[0].r < 0.0);
        assert!(duplicate_scan(&[("a".into(), a), ("b".into(), b)], DUPLICATE_R).unwrap().flagged.is_empty());
    }

    #[test]
    fn eroded_ball_matches_direct_formula() {
        let (a, b) = (ball(15.0), ball(14.0));
        let fa: Vec<f64> = a.data().iter().map(|&v| v as u8 as f64).collect();
        let fb: Vec<f64> = b.data().iter().map(|&v| v as u8 as f64).collect();
        let oracle = pearson(&fa, &fb);
        let rep = duplicate_scan(&[("a".into(), a), ("b".into(), b)], -1.0).unwrap();
        assert!((rep.flagged[0].r - oracle).abs() < 1e-12);
        assert_eq!(oracle > DUPLICATE_R, duplicate_scan(&[("a".into(), ball(15.0)), ("b".into(), ball(14.0))], DUPLICATE_R).unwrap().flagged.len() == 1);
    }

    #[test]
    fn zero_variance_excluded() {
        let geom = Geometry::isotropic([4, 4, 4], 1.0).unwrap();
        let empty = Mask::filled(geom.clone(), false).unwrap();
        let full = Mask::filled(geom.clone(), true).unwrap();
        let some = Mask::from_fn(geom, |x, _, _| x == 0).unwrap();
        let rep = duplicate_scan(&[("e".into(), empty), ("f".into(), full), ("s".into(), some)], DUPLICATE_R).unwrap();
        assert_eq!(rep.excluded, vec!["e", "f"]);
        assert!(rep.flagged.is_empty());
    }

    #[test]
    fn misaligned_masks_rejected() {
        let a = Mask::filled(Geometry::isotropic([4, 4, 4], 1.0).unwrap(), false).unwrap();
        let b = Mask::filled(Geometry::isotropic([4, 4, 5], 1.0).unwrap(), false).unwrap();
        assert!(duplicate_scan(&[("a".into(), a), ("b".into(), b)], DUPLICATE_R).is_err());
    }
}
