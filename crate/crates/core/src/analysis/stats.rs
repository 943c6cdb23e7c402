use serde::{Deserialize, Serialize};

use super::AnalysisError;

/// Two-sided 99% normal quantile.
pub const Z_99: f64 = 2.575_829_303_548_901;

/// Sample mean with a normal-approximation 99% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub n: u64,
    pub mean: f64,
    pub std_err: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                n: 0,
                mean: f64::NAN,
                std_err: f64::NAN,
                ci_low: f64::NAN,
                ci_high: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let std_err = (var / n as f64).sqrt();
        Self {
            n: n as u64,
            mean,
            std_err,
            ci_low: mean - Z_99 * std_err,
            ci_high: mean + Z_99 * std_err,
        }
    }

    /// Whether `value` lies within `k` standard errors of the mean.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_err
    }
}

/// Least-squares line `y ≈ slope · x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineFit {
    pub slope: f64,
    pub intercept: f64,
    /// `max_i |y_i - fit(x_i)| / fit(x_i)`.
    pub max_relative_residual: f64,
}

impl AffineFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

pub fn affine_fit(xs: &[f64], ys: &[f64]) -> Result<AffineFit, AnalysisError> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(AnalysisError::Domain(
            "affine fit needs at least two paired points".into(),
        ));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(AnalysisError::Domain(
            "affine fit needs distinct x values".into(),
        ));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_relative_residual = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let f = slope * x + intercept;
            (y - f).abs() / f.abs()
        })
        .fold(0.0, f64::max);
    Ok(AffineFit {
        slope,
        intercept,
        max_relative_residual,
    })
}

/// `½ Σ |p_i − q_i|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64, AnalysisError> {
    if p.len() != q.len() {
        return Err(AnalysisError::Domain(format!(
            "support mismatch: {} vs {} entries",
            p.len(),
            q.len()
        )));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}
