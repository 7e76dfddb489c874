//! Student-t quantiles and mean confidence intervals.

use serde::{Deserialize, Serialize};
use statrs::function::beta::checked_beta_reg;

use crate::error::{Error, Result};

pub const DEFAULT_LEVEL: f64 = 0.95;

/// Upper tail `P(T > t)` for `t >= 0`.
fn upper_tail(df: f64, t: f64) -> f64 {
    let x = df / (df + t * t);
    0.5 * checked_beta_reg(0.5 * df, 0.5, x).unwrap_or(if x <= 0.0 { 0.0 } else { 1.0 })
}

/// CDF of Student's t with `df` degrees of freedom.
pub fn t_cdf(df: u64, t: f64) -> Result<f64> {
    if df == 0 {
        return Err(Error::Domain(
            "degrees of freedom must be at least 1".into(),
        ));
    }
    if t.is_nan() {
        return Err(Error::Domain("t is NaN".into()));
    }
    let tail = upper_tail(df as f64, t.abs());
    Ok(if t >= 0.0 { 1.0 - tail } else { tail })
}

/// Inverse CDF of Student's t, by bisection on the regularized incomplete
/// beta representation of the tail.
pub fn t_quantile(df: u64, p: f64) -> Result<f64> {
    if df == 0 {
        return Err(Error::Domain(
            "degrees of freedom must be at least 1".into(),
        ));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("probability {p} outside (0, 1)")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let df = df as f64;
    let target = p.min(1.0 - p);

    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while upper_tail(df, hi) > target {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Domain(format!("quantile for p = {p} overflows")));
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if upper_tail(df, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    Ok(if p > 0.5 { t } else { -t })
}

/// `mean ± half_width` at `level` confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub mean: f64,
    pub half_width: f64,
    pub level: f64,
    pub n: usize,
    /// Sample standard deviation (n - 1 denominator).
    pub std_dev: f64,
}

impl ConfidenceInterval {
    /// `0.624±0.006` style, three decimals.
    pub fn display(&self) -> String {
        format!("{:.3}\u{00B1}{:.3}", self.mean, self.half_width)
    }
}

pub fn mean_confidence_interval(values: &[f64], level: f64) -> Result<ConfidenceInterval> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!(
            "confidence level {level} outside (0, 1)"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite value in sample".into()));
    }
    if values.iter().all(|&v| v == values[0]) {
        return Ok(ConfidenceInterval {
            mean: values[0],
            half_width: 0.0,
            level,
            n,
            std_dev: 0.0,
        });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let std_dev = (ss / (n - 1) as f64).sqrt();
    let t = t_quantile((n - 1) as u64, 0.5 * (1.0 + level))?;
    Ok(ConfidenceInterval {
        mean,
        half_width: t * std_dev / (n as f64).sqrt(),
        level,
        n,
        std_dev,
    })
}
