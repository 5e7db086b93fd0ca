//! Conditional residuals and their parameter derivatives.
//!
//! Residuals follow the conditional scheme with `y_s = 0` and `e_s = 0` for
//! `s <= 0`:
//!
//! ```text
//! e_t = y_t - sum_{i=1}^{p} (phi_i + psi_i I_t) e_{t-i},   I_t = I(y_{t-d} <= r)
//! ```
//!
//! Sums run in ascending lag order, and the linear MA residuals go through the
//! same code path with every indicator off, so `psi = 0` reproduces
//! [`residuals_ma`] bit for bit.

use crate::error::{Result, TmaError};
use crate::model::{check_invertibility, ModelOrders, TmaParams};

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSet {
    pub eps: Vec<f64>,
    /// Regime of each t, `I(y_{t-d} <= r)`.
    pub indicator: Vec<bool>,
}

/// Row `t` holds `(d e_t / d phi', d e_t / d psi')`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    n: usize,
    k: usize,
    data: Vec<f64>,
}

impl ScoreSet {
    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.k
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.k..(t + 1) * self.k]
    }

    pub fn get(&self, t: usize, j: usize) -> f64 {
        self.data[t * self.k + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|t| self.get(t, j)).collect()
    }
}

pub(crate) fn check_finite(y: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(TmaError::Data("series is empty".into()));
    }
    match y.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(TmaError::Data(format!("non-finite observation at index {i}"))),
        None => Ok(()),
    }
}

/// `I(y_{t-d} <= r)` for each t, with `y_s = 0` for `s <= 0`. `None` means `r = -inf`.
pub fn regime_indicators(y: &[f64], d: usize, r: Option<f64>) -> Vec<bool> {
    match r {
        None => vec![false; y.len()],
        Some(r) => (0..y.len())
            .map(|t| {
                let lagged = if t >= d { y[t - d] } else { 0.0 };
                lagged <= r
            })
            .collect(),
    }
}

/// Recursion coefficients for the two regimes.
#[derive(Debug, Clone)]
pub(crate) struct RegimeCoefficients {
    /// `phi`, used when the indicator is off.
    pub high: Vec<f64>,
    /// `phi + psi` (zero padded), used when the indicator fires.
    pub low: Vec<f64>,
}

impl RegimeCoefficients {
    pub fn new(phi: &[f64], psi: &[f64]) -> Self {
        let low = phi
            .iter()
            .enumerate()
            .map(|(i, v)| v + psi.get(i).copied().unwrap_or(0.0))
            .collect();
        RegimeCoefficients {
            high: phi.to_vec(),
            low,
        }
    }

    #[inline]
    pub fn at(&self, ind: bool) -> &[f64] {
        if ind {
            &self.low
        } else {
            &self.high
        }
    }
}

pub(crate) fn residual_recursion(
    y: &[f64],
    coef: &RegimeCoefficients,
    indicator: &[bool],
    eps: &mut [f64],
) {
    let p = coef.high.len();
    for t in 0..y.len() {
        let c = coef.at(indicator[t]);
        let mut acc = y[t];
        for i in 1..=p.min(t) {
            acc -= c[i - 1] * eps[t - i];
        }
        eps[t] = acc;
    }
}

/// Fills the row-major `n x (p + q)` score matrix.
pub(crate) fn score_recursion(
    eps: &[f64],
    coef: &RegimeCoefficients,
    q: usize,
    indicator: &[bool],
    out: &mut [f64],
) {
    let p = coef.high.len();
    let k = p + q;
    for t in 0..eps.len() {
        let ind = indicator[t];
        let c = coef.at(ind);
        for j in 0..k {
            let mut acc = if j < p {
                let lag = j + 1;
                if t >= lag {
                    -eps[t - lag]
                } else {
                    0.0
                }
            } else {
                let lag = j - p + 1;
                if ind && t >= lag {
                    -eps[t - lag]
                } else {
                    0.0
                }
            };
            for i in 1..=p.min(t) {
                acc -= c[i - 1] * out[(t - i) * k + j];
            }
            out[t * k + j] = acc;
        }
    }
}

/// Linear MA residuals (threshold at `-inf`).
pub fn residuals_ma(y: &[f64], phi: &[f64]) -> Result<ResidualSet> {
    if phi.is_empty() {
        return Err(TmaError::InvalidOrders("phi must be nonempty".into()));
    }
    check_finite(y)?;
    let indicator = vec![false; y.len()];
    let coef = RegimeCoefficients::new(phi, &[]);
    let mut eps = vec![0.0; y.len()];
    residual_recursion(y, &coef, &indicator, &mut eps);
    Ok(ResidualSet { eps, indicator })
}

fn require_invertible_threshold(params: &TmaParams, orders: &ModelOrders) -> Result<f64> {
    params.check_lengths(orders)?;
    let inv = check_invertibility(&params.phi, &params.psi)?;
    if !inv.ok {
        return Err(TmaError::NotInvertible { a: inv.a });
    }
    params
        .r
        .ok_or_else(|| TmaError::InvalidSpec("threshold r is required".into()))
}

pub fn residuals_tma(y: &[f64], params: &TmaParams, orders: &ModelOrders) -> Result<ResidualSet> {
    let r = require_invertible_threshold(params, orders)?;
    check_finite(y)?;
    let indicator = regime_indicators(y, orders.d, Some(r));
    let coef = RegimeCoefficients::new(&params.phi, &params.psi);
    let mut eps = vec![0.0; y.len()];
    residual_recursion(y, &coef, &indicator, &mut eps);
    Ok(ResidualSet { eps, indicator })
}

/// Truncation lag that makes the geometric tail `a^floor(J/p)` at most 1e-12.
pub fn default_truncation(a: f64, p: usize) -> usize {
    if a <= 0.0 {
        return p.max(1);
    }
    let blocks = ((1e-12f64).ln() / a.ln()).ceil().max(1.0) as usize;
    blocks * p + p
}

/// Residuals from the invertible expansion
/// `e_t = y_t + sum_{j=1}^{J} u' prod_{i=1}^{j} [Phi + Psi I(y_{t-d-i+1} <= r)] u y_{t-j}`.
///
/// `truncation = None` picks [`default_truncation`]. Terms with `t - j <= 0`
/// vanish because pre-sample observations are zero.
pub fn residuals_via_expansion(
    y: &[f64],
    params: &TmaParams,
    orders: &ModelOrders,
    truncation: Option<usize>,
) -> Result<ResidualSet> {
    let r = require_invertible_threshold(params, orders)?;
    check_finite(y)?;
    let a = params.invertibility()?.a;
    let big_j = truncation.unwrap_or_else(|| default_truncation(a, orders.p));
    let indicator = regime_indicators(y, orders.d, Some(r));
    let coef = RegimeCoefficients::new(&params.phi, &params.psi);
    let p = orders.p;
    let n = y.len();
    let mut eps = vec![0.0; n];
    let mut w = vec![0.0; p];
    let mut next = vec![0.0; p];
    for t in 0..n {
        // w' = u' A_t A_{t-1} ... A_{t-j+1}; the weight on y_{t-j} is w[0].
        w.iter_mut().for_each(|v| *v = 0.0);
        w[0] = 1.0;
        let mut acc = y[t];
        for j in 1..=big_j.min(t) {
            let c = coef.at(indicator[t + 1 - j]);
            for k in 0..p {
                let shifted = if k + 1 < p { w[k + 1] } else { 0.0 };
                next[k] = -w[0] * c[k] + shifted;
            }
            std::mem::swap(&mut w, &mut next);
            acc += w[0] * y[t - j];
        }
        eps[t] = acc;
    }
    Ok(ResidualSet { eps, indicator })
}

/// Analytic derivatives of the residuals with respect to `(phi, psi)`.
pub fn score_tma(y: &[f64], params: &TmaParams, orders: &ModelOrders) -> Result<ScoreSet> {
    let res = residuals_tma(y, params, orders)?;
    Ok(score_from_residuals(&res, params, orders))
}

/// Scores for residuals that were already computed at `params`.
pub fn score_from_residuals(res: &ResidualSet, params: &TmaParams, orders: &ModelOrders) -> ScoreSet {
    let coef = RegimeCoefficients::new(&params.phi, &params.psi);
    let n = res.eps.len();
    let k = orders.n_coefficients();
    let mut data = vec![0.0; n * k];
    score_recursion(&res.eps, &coef, orders.q, &res.indicator, &mut data);
    ScoreSet { n, k, data }
}

/// Sum of squared residuals.
pub fn sse(res: &ResidualSet) -> f64 {
    res.eps.iter().map(|e| e * e).sum()
}
