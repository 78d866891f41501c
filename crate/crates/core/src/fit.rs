//! Least-squares fit of exponential decay `y ≈ C e^{-rate·x}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLinearFit {
    pub rate: f64,
    /// `ln C`
    pub intercept: f64,
    pub r_squared: f64,
    /// Root-mean-square residual of `ln y`.
    pub residual: f64,
    /// Standard error of the rate.
    pub rate_std_error: f64,
    pub points: usize,
}

impl LogLinearFit {
    pub fn prefactor(&self) -> f64 {
        self.intercept.exp()
    }
}

/// Fits `ln y = intercept - rate·x` by ordinary least squares. Points with
/// `y ≤ 0` are rejected by the caller; here they are an error.
pub fn log_linear_fit(xs: &[f64], ys: &[f64]) -> Result<LogLinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::DegenerateFit("x and y lengths differ".into()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::DegenerateFit(format!("need at least 2 points, got {n}")));
    }
    if ys.iter().any(|&y| !(y > 0.0) || !y.is_finite()) {
        return Err(Error::DegenerateFit("non-positive or non-finite value".into()));
    }
    let ls: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ls.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ls).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ls.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all x values coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ls)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let rate_std_error = if n > 2 { (sse / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(LogLinearFit {
        rate: -slope,
        intercept,
        r_squared,
        residual: (sse / nf).sqrt(),
        rate_std_error,
        points: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_exponential() {
        let xs: Vec<f64> = (2..20).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * (-0.7 * x).exp()).collect();
        let f = log_linear_fit(&xs, &ys).unwrap();
        assert!((f.rate - 0.7).abs() < 1e-12);
        assert!((f.prefactor() - 3.0).abs() < 1e-10);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flat_profile_has_zero_rate() {
        let f = log_linear_fit(&[1.0, 2.0, 3.0], &[0.5, 0.5, 0.5]).unwrap();
        assert!(f.rate.abs() < 1e-15);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(log_linear_fit(&[1.0], &[1.0]).is_err());
        assert!(log_linear_fit(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(log_linear_fit(&[1.0, 2.0], &[1.0, 0.0]).is_err());
    }
}
