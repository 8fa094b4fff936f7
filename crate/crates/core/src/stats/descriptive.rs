/// Percentile of an ascending slice by linear interpolation at rank `p·(n−1)/100`.
///
/// `sorted` must be non-empty and sorted; `p` is clamped to `[0, 100]`.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let p = p.clamp(0.0, 100.0);
    let rank = p * (sorted.len() - 1) as f64 / 100.0;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        return sorted[lo];
    }
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn sort_values(values: &mut [f64]) {
    values.sort_by(|a, b| a.total_cmp(b));
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n − 1); zero for fewer than two values.
pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Mean and sample SD in one pass over a slice.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Self {
        MeanSd {
            mean: if values.is_empty() { 0.0 } else { mean(values) },
            sd: sample_sd(values),
            n: values.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_percentiles() {
        let ramp: Vec<f64> = (0..100).map(|v| v as f64).collect();
        assert!((percentile_sorted(&ramp, 1.0) - 0.99).abs() < 1e-12);
        assert!((percentile_sorted(&ramp, 99.0) - 98.01).abs() < 1e-12);
        assert_eq!(percentile_sorted(&ramp, 0.0), 0.0);
        assert_eq!(percentile_sorted(&ramp, 100.0), 99.0);
    }

    #[test]
    fn single_value() {
        assert_eq!(percentile_sorted(&[4.0], 37.0), 4.0);
    }

    #[test]
    fn sd_of_three() {
        assert!((sample_sd(&[-1.0, 0.0, 1.0]) - 1.0).abs() < 1e-15);
    }
}
