//! Residual autocorrelations, the Ljung-Box portmanteau test and AIC.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Result, TmaError};
use crate::residuals::check_finite;

/// Sample autocorrelations `rho_0 ..= rho_max_lag`.
pub fn acf(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    check_finite(x)?;
    let n = x.len();
    if max_lag >= n {
        return Err(TmaError::Length(format!("max_lag {max_lag} must be below n = {n}")));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let denom: f64 = c.iter().map(|v| v * v).sum();
    if !(denom > 0.0) {
        return Err(TmaError::UndefinedAcf("series is constant".into()));
    }
    Ok((0..=max_lag)
        .map(|k| c[k..].iter().zip(&c).map(|(a, b)| a * b).sum::<f64>() / denom)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PortmanteauResult {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "Q")]
    pub q: f64,
    pub df: usize,
    #[serde(rename = "p")]
    pub p_value: f64,
}

/// `Q(M) = n(n+2) sum_{k=1}^M rho_k^2 / (n-k)` on `M - fitted_params` degrees of freedom.
pub fn ljung_box(residuals: &[f64], m: usize, fitted_params: usize) -> Result<PortmanteauResult> {
    if m <= fitted_params {
        return Err(TmaError::InvalidDf(format!(
            "lag count {m} must exceed the {fitted_params} fitted parameters"
        )));
    }
    let rho = acf(residuals, m)?;
    let n = residuals.len() as f64;
    let q = n * (n + 2.0)
        * (1..=m)
            .map(|k| rho[k] * rho[k] / (n - k as f64))
            .sum::<f64>();
    let df = m - fitted_params;
    Ok(PortmanteauResult {
        m,
        q,
        df,
        p_value: chi2_upper_tail(q, df),
    })
}

pub fn chi2_upper_tail(x: f64, df: usize) -> f64 {
    let dist = ChiSquared::new(df as f64).expect("df is positive");
    dist.sf(x).clamp(0.0, 1.0)
}

/// `n ln(sse / n) + 2 k`.
pub fn aic(n: usize, sse: f64, k_params: usize) -> Result<f64> {
    if !(sse > 0.0 && sse.is_finite()) || n == 0 {
        return Err(TmaError::Data(format!("AIC needs sse > 0 and n > 0, got sse = {sse}, n = {n}")));
    }
    let nf = n as f64;
    Ok(nf * (sse / nf).ln() + 2.0 * k_params as f64)
}
