//! Log-log least-squares rate fitting.

use crate::{Error, Result};
use serde::Serialize;

/// Result of a power-law fit `value ≈ C · param^slope` with a verdict against
/// a predicted slope.
#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub predicted_slope: f64,
    /// `true` when `slope >= predicted_slope - 0.05`.
    pub verdict: bool,
}

/// Least-squares slope and `r²` of `ln(values)` against `ln(params)`.
///
/// Preconditions: at least 3 samples, all entries strictly positive.
pub fn log_log_fit(params: &[f64], values: &[f64]) -> Result<(f64, f64, f64)> {
    if params.len() != values.len() {
        return Err(Error::Precondition(format!(
            "fit: {} parameters vs {} values",
            params.len(),
            values.len()
        )));
    }
    if params.len() < 3 {
        return Err(Error::Precondition(format!(
            "fit: need at least 3 samples, got {}",
            params.len()
        )));
    }
    for (&p, &v) in params.iter().zip(values.iter()) {
        if !(p > 0.0) || !p.is_finite() {
            return Err(Error::Domain(format!("fit: non-positive parameter {p}")));
        }
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("fit: non-positive value {v}")));
        }
    }

    let n = params.len() as f64;
    let xs: Vec<f64> = params.iter().map(|p| p.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        sxx += (x - xm) * (x - xm);
        sxy += (x - xm) * (y - ym);
        syy += (y - ym) * (y - ym);
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok((slope, intercept, r2))
}

/// Fits a rate and applies the standard verdict margin of 0.05.
pub fn fit_rate(params: &[f64], values: &[f64], predicted_slope: f64) -> Result<RateFit> {
    let (slope, intercept, r2) = log_log_fit(params, values)?;
    Ok(RateFit {
        slope,
        intercept,
        r2,
        predicted_slope,
        verdict: slope >= predicted_slope - 0.05,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_power_law() {
        let params = [1e-2, 1e-3, 1e-4, 1e-5];
        let values: Vec<f64> = params.iter().map(|&p: &f64| 3.0 * p.powf(0.25)).collect();
        let fit = fit_rate(&params, &values, 0.25).unwrap();
        assert!((fit.slope - 0.25).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        assert!(fit.verdict);
    }

    #[test]
    fn verdict_margin() {
        let params = [1e-2, 1e-3, 1e-4, 1e-5];
        let values: Vec<f64> = params.iter().map(|&p: &f64| p.powf(0.21)).collect();
        let fit = fit_rate(&params, &values, 0.25).unwrap();
        assert!(fit.verdict, "0.21 within margin of 0.25");
        let values2: Vec<f64> = params.iter().map(|&p: &f64| p.powf(0.19)).collect();
        let fit2 = fit_rate(&params, &values2, 0.25).unwrap();
        assert!(!fit2.verdict);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(log_log_fit(&[1e-2, 1e-3], &[1.0, 2.0]).is_err());
        assert!(log_log_fit(&[1e-2, 1e-3, 1e-4], &[1.0, -2.0, 3.0]).is_err());
        assert!(log_log_fit(&[1e-2, 1e-3, 0.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn narrow_range_is_fine_for_rate_fits() {
        // Rate studies span well under two decades; only sample count and
        // positivity are preconditions here.
        let params = [4e-3, 2e-3, 1e-3, 5e-4];
        let values: Vec<f64> = params.iter().map(|&p: &f64| p.sqrt().sqrt()).collect();
        let fit = fit_rate(&params, &values, 0.25).unwrap();
        assert!((fit.slope - 0.25).abs() < 1e-12 && fit.verdict);
    }

    #[test]
    fn r2_detects_scatter() {
        let params = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];
        let values = [1.0, 5.0, 0.2, 3.0, 0.8];
        let (_, _, r2) = log_log_fit(&params, &values).unwrap();
        assert!(r2 < 0.5);
    }
}
