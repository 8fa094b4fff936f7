use serde::{Deserialize, Serialize};

use super::descriptive::{mean, sample_sd};
use super::special::normal_two_sided;
use crate::error::{Error, Result};

pub const Z_95: f64 = 1.96;
pub const SEPARATION_BETA: f64 = 50.0;
pub const MIN_LOGISTIC_N: usize = 10;
const RIDGE: f64 = 1e-10;
const TOL: f64 = 1e-8;
const MAX_ITER: usize = 100;

/// `detected ~ intercept + beta * log10(volume_cm3)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub beta: f64,
    pub intercept: f64,
    pub se_beta: f64,
    pub se_intercept: f64,
    pub log_likelihood: f64,
    /// Odds ratio per tenfold increase in volume.
    pub or_per_decade: f64,
    pub or_ci: (f64, f64),
    pub wald_z: f64,
    pub p: f64,
    pub n: usize,
    pub converged: bool,
    pub iterations: usize,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticFit {
    /// Fitted detection probability at a volume in cm³.
    pub fn probability(&self, volume_cm3: f64) -> f64 {
        sigmoid(self.intercept + self.beta * volume_cm3.log10())
    }

    /// Volume at which the fitted probability is 0.5.
    pub fn volume_at_half(&self) -> f64 {
        10f64.powf(-self.intercept / self.beta)
    }

    /// `n` points log-spaced over `[lo, hi]` cm³.
    pub fn curve(&self, lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
        let (a, b) = (lo.log10(), hi.log10());
        (0..n)
            .map(|i| {
                let t = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                let v = 10f64.powf(a + t * (b - a));
                (v, self.probability(v))
            })
            .collect()
    }

    /// Assembles a fit from coefficients; the odds ratio and its interval are
    /// the exponentials of beta and beta ± 1.96 se.
    pub fn from_coefficients(beta: f64, intercept: f64, se_beta: f64) -> Self {
        let wald_z = beta / se_beta;
        LogisticFit {
            beta,
            intercept,
            se_beta,
            se_intercept: f64::NAN,
            log_likelihood: f64::NAN,
            or_per_decade: beta.exp(),
            or_ci: ((beta - Z_95 * se_beta).exp(), (beta + Z_95 * se_beta).exp()),
            wald_z,
            p: normal_two_sided(wald_z),
            n: 0,
            converged: true,
            iterations: 0,
        }
    }
}

fn log_likelihood(x: &[f64], y: &[bool], b0: f64, b1: f64) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let z = b0 + b1 * xi;
            // log(1 + e^z) computed stably.
            let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            if yi {
                z - softplus
            } else {
                -softplus
            }
        })
        .sum()
}

/// Maximum-likelihood logistic regression on log10 volume by IRLS.
pub fn fit_logistic(detected: &[bool], volumes_cm3: &[f64]) -> Result<LogisticFit> {
    if detected.len() != volumes_cm3.len() {
        return Err(Error::Validation(format!(
            "{} outcomes but {} volumes",
            detected.len(),
            volumes_cm3.len()
        )));
    }
    let n = detected.len();
    if n < MIN_LOGISTIC_N {
        return Err(Error::SampleSize { needed: MIN_LOGISTIC_N, got: n });
    }
    if let Some(v) = volumes_cm3.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::Validation(format!("volumes must be positive, got {v}")));
    }
    let n_pos = detected.iter().filter(|&&d| d).count();
    if n_pos == 0 || n_pos == n {
        return Err(Error::Degenerate("logistic fit needs both outcomes".into()));
    }
    let x: Vec<f64> = volumes_cm3.iter().map(|v| v.log10()).collect();

    // Complete or quasi-complete separation on a single predictor.
    let max_neg = x.iter().zip(detected).filter(|(_, &d)| !d).map(|(&v, _)| v).fold(f64::MIN, f64::max);
    let min_pos = x.iter().zip(detected).filter(|(_, &d)| d).map(|(&v, _)| v).fold(f64::MAX, f64::min);
    let max_pos = x.iter().zip(detected).filter(|(_, &d)| d).map(|(&v, _)| v).fold(f64::MIN, f64::max);
    let min_neg = x.iter().zip(detected).filter(|(_, &d)| !d).map(|(&v, _)| v).fold(f64::MAX, f64::min);
    if max_neg <= min_pos || max_pos <= min_neg {
        return Err(Error::Separation { beta: f64::INFINITY });
    }

    let (mut b0, mut b1) = (0.0f64, 0.0f64);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let mut g = [0.0; 2];
        let mut info = [[RIDGE, 0.0], [0.0, RIDGE]];
        for (&xi, &yi) in x.iter().zip(detected) {
            let p = sigmoid(b0 + b1 * xi);
            let r = yi as u8 as f64 - p;
            let w = p * (1.0 - p);
            g[0] += r;
            g[1] += r * xi;
            info[0][0] += w;
            info[0][1] += w * xi;
            info[1][1] += w * xi * xi;
        }
        info[1][0] = info[0][1];
        let det = info[0][0] * info[1][1] - info[0][1] * info[1][0];
        if !(det.is_finite() && det > 0.0) {
            return Err(Error::Degenerate("singular information matrix".into()));
        }
        let d0 = (info[1][1] * g[0] - info[0][1] * g[1]) / det;
        let d1 = (info[0][0] * g[1] - info[1][0] * g[0]) / det;
        b0 += d0;
        b1 += d1;
        if b1.abs() > SEPARATION_BETA {
            return Err(Error::Separation { beta: b1 });
        }
        if d0.abs().max(d1.abs()) < TOL {
            converged = true;
            break;
        }
    }
    // Information at the final estimate.
    let mut fin = [[RIDGE, 0.0], [0.0, RIDGE]];
    for &xi in &x {
        let p = sigmoid(b0 + b1 * xi);
        let w = p * (1.0 - p);
        fin[0][0] += w;
        fin[0][1] += w * xi;
        fin[1][1] += w * xi * xi;
    }
    let det = fin[0][0] * fin[1][1] - fin[0][1] * fin[0][1];
    let se_beta = (fin[0][0] / det).sqrt();
    let se_intercept = (fin[1][1] / det).sqrt();
    let mut fit = LogisticFit::from_coefficients(b1, b0, se_beta);
    fit.se_intercept = se_intercept;
    fit.log_likelihood = log_likelihood(&x, detected, b0, b1);
    fit.n = n;
    fit.converged = converged;
    fit.iterations = iterations;
    if !converged {
        log::warn!("logistic fit stopped after {MAX_ITER} iterations without converging");
    }
    Ok(fit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: usize,
}

/// Least-squares line of `y` on `x` with the coefficient of determination.
pub fn ols_r2(x: &[f64], y: &[f64]) -> Result<OlsFit> {
    if x.len() != y.len() {
        return Err(Error::Validation(format!("{} x values but {} y values", x.len(), y.len())));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::SampleSize { needed: 2, got: n });
    }
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("zero variance in x".into()));
    }
    if syy == 0.0 {
        return Err(Error::Degenerate("zero variance in y; R² undefined".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    Ok(OlsFit { slope, intercept, r2: 1.0 - ss_res / syy, n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub loa_lo: f64,
    pub loa_hi: f64,
    pub n: usize,
}

/// Agreement of `pred` with `truth`: mean of `pred - truth` and limits at
/// ±1.96 sample standard deviations.
pub fn bland_altman(pred: &[f64], truth: &[f64]) -> Result<BlandAltman> {
    if pred.len() != truth.len() {
        return Err(Error::Validation(format!("{} predictions but {} truths", pred.len(), truth.len())));
    }
    if pred.len() < 2 {
        return Err(Error::SampleSize { needed: 2, got: pred.len() });
    }
    let d: Vec<f64> = pred.iter().zip(truth).map(|(p, t)| p - t).collect();
    let mean_diff = mean(&d);
    let sd_diff = sample_sd(&d);
    Ok(BlandAltman {
        mean_diff,
        sd_diff,
        loa_lo: mean_diff - Z_95 * sd_diff,
        loa_hi: mean_diff + Z_95 * sd_diff,
        n: d.len(),
    })
}
