//! Conditional least-squares fits: linear MA, TMA at a fixed threshold, and
//! the threshold profile.
//!
//! Both fits minimise the sum of squared conditional residuals with damped
//! Gauss-Newton steps built from the analytic scores. The parameter region
//! `a <= 1 - 1e-6` (with `a` the contraction constant) is enforced through an
//! exterior quadratic penalty added to the sum of squares, so iterates may
//! briefly leave the invertible region during the line search.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, TmaError};
use crate::model::{check_invertibility, ModelOrders, TmaParams};
use crate::residuals::{
    check_finite, regime_indicators, residual_recursion, score_recursion, RegimeCoefficients,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Converged when `||grad|| <= grad_tol * (1 + sse)`.
    pub grad_tol: f64,
    /// Also converged when the Gauss-Newton step predicts a drop in the
    /// objective below `decrease_tol * (1 + sse)`.
    pub decrease_tol: f64,
    pub penalty_weight: f64,
    pub penalty_margin: f64,
    pub max_halvings: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 200,
            grad_tol: 1e-8,
            decrease_tol: 1e-12,
            penalty_weight: 1e8,
            penalty_margin: 1e-6,
            max_halvings: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub params: TmaParams,
    pub sse: f64,
    pub sigma2: f64,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// Candidate thresholds between two empirical quantiles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdGrid {
    candidates: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
}

impl ThresholdGrid {
    /// A grid with explicit candidates (sorted and deduplicated here).
    pub fn from_candidates(mut candidates: Vec<f64>, beta1: f64, beta2: f64) -> Result<Self> {
        if candidates.is_empty() || candidates.iter().any(|c| !c.is_finite()) {
            return Err(TmaError::DegenerateGrid(
                "candidates must be nonempty and finite".into(),
            ));
        }
        candidates.sort_by(f64::total_cmp);
        candidates.dedup();
        Ok(ThresholdGrid {
            candidates,
            beta1,
            beta2,
        })
    }

    pub fn candidates(&self) -> &[f64] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Evenly thinned copy with at most `max_points` candidates (endpoints kept).
    pub fn thinned(&self, max_points: usize) -> ThresholdGrid {
        ThresholdGrid {
            candidates: thin_evenly(&self.candidates, max_points),
            beta1: self.beta1,
            beta2: self.beta2,
        }
    }
}

fn thin_evenly(values: &[f64], max_points: usize) -> Vec<f64> {
    let m = values.len();
    if m <= max_points || max_points == 0 {
        return values.to_vec();
    }
    if max_points == 1 {
        return vec![values[0]];
    }
    let mut out: Vec<f64> = (0..max_points)
        .map(|i| {
            let idx = (i as f64 * (m - 1) as f64 / (max_points - 1) as f64).round() as usize;
            values[idx]
        })
        .collect();
    out.dedup();
    out
}

/// Distinct order statistics `y_(ceil(n beta1)) .. y_(floor(n beta2))`,
/// thinned evenly to at most `max_points`.
pub fn threshold_grid(y: &[f64], beta1: f64, beta2: f64, max_points: usize) -> Result<ThresholdGrid> {
    if !(beta1 > 0.0 && beta1 < beta2 && beta2 < 1.0) {
        return Err(TmaError::InvalidSpec(format!(
            "need 0 < beta1 < beta2 < 1, got ({beta1}, {beta2})"
        )));
    }
    if max_points < 2 {
        return Err(TmaError::InvalidSpec("max_points must be at least 2".into()));
    }
    check_finite(y)?;
    let n = y.len() as f64;
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    // 1-based order statistic ranks; the slack absorbs products like 400 * 0.1
    let lo = ((n * beta1 - 1e-9).ceil() as usize).max(1);
    let hi = ((n * beta2 + 1e-9).floor() as usize).min(sorted.len());
    if lo > hi {
        return Err(TmaError::DegenerateGrid(format!(
            "no order statistics between ranks {lo} and {hi}"
        )));
    }
    let mut distinct = sorted[lo - 1..hi].to_vec();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(TmaError::DegenerateGrid(
            "fewer than two distinct values between the quantile bounds".into(),
        ));
    }
    Ok(ThresholdGrid {
        candidates: thin_evenly(&distinct, max_points),
        beta1,
        beta2,
    })
}

/// Scratch space for repeated fits on one series at one fixed threshold.
struct LeastSquares<'a> {
    y: &'a [f64],
    p: usize,
    q: usize,
    indicator: Vec<bool>,
    opts: FitOptions,
    eps: Vec<f64>,
    trial: Vec<f64>,
    score: Vec<f64>,
}

struct Minimum {
    theta: Vec<f64>,
    sse: f64,
    objective: f64,
    converged: bool,
    iterations: usize,
    grad_norm: f64,
}

impl<'a> LeastSquares<'a> {
    fn new(y: &'a [f64], p: usize, q: usize, indicator: Vec<bool>, opts: FitOptions) -> Self {
        let n = y.len();
        LeastSquares {
            y,
            p,
            q,
            indicator,
            opts,
            eps: vec![0.0; n],
            trial: vec![0.0; n],
            score: vec![0.0; n * (p + q)],
        }
    }

    fn coefficients(&self, theta: &[f64]) -> RegimeCoefficients {
        RegimeCoefficients::new(&theta[..self.p], &theta[self.p..])
    }

    /// Penalty value and gradient.
    fn penalty(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let (phi, psi) = theta.split_at(self.p);
        let high: f64 = phi.iter().map(|v| v.abs()).sum();
        let low_terms: Vec<f64> = (0..self.p)
            .map(|i| phi[i] + psi.get(i).copied().unwrap_or(0.0))
            .collect();
        let low: f64 = low_terms.iter().map(|v| v.abs()).sum();
        let bound = 1.0 - self.opts.penalty_margin;
        let a = high.max(low);
        let mut grad = vec![0.0; theta.len()];
        if a <= bound {
            return (0.0, grad);
        }
        let excess = a - bound;
        let scale = 2.0 * self.opts.penalty_weight * excess;
        if high >= low {
            for i in 0..self.p {
                grad[i] = scale * phi[i].signum();
            }
        } else {
            for i in 0..self.p {
                let s = scale * low_terms[i].signum();
                grad[i] = s;
                if i < self.q {
                    grad[self.p + i] = s;
                }
            }
        }
        (self.opts.penalty_weight * excess * excess, grad)
    }

    /// Returns `(sse, sse + penalty)` and leaves residuals in `buf`.
    fn evaluate(&self, theta: &[f64], buf: &mut [f64]) -> (f64, f64) {
        let coef = self.coefficients(theta);
        residual_recursion(self.y, &coef, &self.indicator, buf);
        let sse: f64 = buf.iter().map(|e| e * e).sum();
        if !sse.is_finite() {
            return (f64::INFINITY, f64::INFINITY);
        }
        (sse, sse + self.penalty(theta).0)
    }

    /// `(U'U, U'e + grad_pen / 2)` at `theta` using residuals in `self.eps`.
    fn normal_equations(&mut self, theta: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let k = self.p + self.q;
        let coef = self.coefficients(theta);
        score_recursion(&self.eps, &coef, self.q, &self.indicator, &mut self.score);
        let mut h = DMatrix::zeros(k, k);
        let mut b = DVector::zeros(k);
        for (t, e) in self.eps.iter().enumerate() {
            let row = &self.score[t * k..(t + 1) * k];
            for i in 0..k {
                b[i] += row[i] * e;
                for j in 0..=i {
                    h[(i, j)] += row[i] * row[j];
                }
            }
        }
        for i in 0..k {
            for j in 0..i {
                h[(j, i)] = h[(i, j)];
            }
        }
        let (_, pen_grad) = self.penalty(theta);
        for i in 0..k {
            b[i] += 0.5 * pen_grad[i];
        }
        (h, b)
    }

    fn minimize(&mut self, start: &[f64]) -> Result<Minimum> {
        let mut theta = start.to_vec();
        let mut eps = std::mem::take(&mut self.eps);
        let (mut sse, mut obj) = self.evaluate(&theta, &mut eps);
        self.eps = eps;
        if !obj.is_finite() {
            return Err(TmaError::Numerical(
                "objective is not finite at the starting point".into(),
            ));
        }
        let mut iterations = 0;
        let mut converged = false;
        let mut grad_norm;
        loop {
            let (h, b) = self.normal_equations(&theta);
            grad_norm = 2.0 * b.norm();
            if grad_norm <= self.opts.grad_tol * (1.0 + sse) {
                converged = true;
                break;
            }
            if iterations >= self.opts.max_iter {
                break;
            }
            let step = solve_spd(h, &b);
            // sse is quadratic to first order, so b'step is the predicted drop
            if b.dot(&step) <= self.opts.decrease_tol * (1.0 + sse) {
                converged = true;
                break;
            }
            let mut t = 1.0;
            let mut accepted = false;
            let mut trial = std::mem::take(&mut self.trial);
            let mut cand = theta.clone();
            for _ in 0..=self.opts.max_halvings {
                for (c, (th, s)) in cand.iter_mut().zip(theta.iter().zip(step.iter())) {
                    *c = th - t * s;
                }
                let (s_new, o_new) = self.evaluate(&cand, &mut trial);
                if o_new < obj {
                    sse = s_new;
                    obj = o_new;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if accepted {
                std::mem::swap(&mut self.eps, &mut trial);
                theta.copy_from_slice(&cand);
            }
            self.trial = trial;
            if !accepted {
                break;
            }
            iterations += 1;
        }
        Ok(Minimum {
            theta,
            sse,
            objective: obj,
            converged,
            iterations,
            grad_norm,
        })
    }
}

/// Solves `h x = b` for symmetric positive semidefinite `h`, adding a ridge
/// when `h` is singular (e.g. a regime that never fires).
fn solve_spd(h: DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let k = h.nrows();
    let diag_max = (0..k).map(|i| h[(i, i)]).fold(0.0, f64::max);
    let mut ridge = 0.0;
    for _ in 0..30 {
        let mut m = h.clone();
        for i in 0..k {
            m[(i, i)] += ridge;
        }
        if let Some(ch) = m.cholesky() {
            let x = ch.solve(b);
            if x.iter().all(|v| v.is_finite()) {
                return x;
            }
        }
        ridge = if ridge == 0.0 {
            1e-12 * (1.0 + diag_max)
        } else {
            ridge * 10.0
        };
    }
    DVector::zeros(k)
}

fn to_fit(min: Minimum, p: usize, r: Option<f64>, n: usize) -> FitResult {
    let (phi, psi) = min.theta.split_at(p);
    FitResult {
        params: TmaParams {
            phi: phi.to_vec(),
            psi: psi.to_vec(),
            r,
        },
        sse: min.sse,
        sigma2: min.sse / n as f64,
        converged: min.converged,
        iterations: min.iterations,
        grad_norm: min.grad_norm,
    }
}

pub fn fit_ma(y: &[f64], p: usize) -> Result<FitResult> {
    fit_ma_with(y, p, &FitOptions::default())
}

pub fn fit_ma_with(y: &[f64], p: usize, opts: &FitOptions) -> Result<FitResult> {
    if p == 0 {
        return Err(TmaError::InvalidOrders("p must be positive".into()));
    }
    check_finite(y)?;
    if y.len() <= 10 * p {
        return Err(TmaError::Data(format!(
            "need more than {} observations to fit MA({p}), got {}",
            10 * p,
            y.len()
        )));
    }
    let mut ls = LeastSquares::new(y, p, 0, vec![false; y.len()], *opts);
    let min = ls.minimize(&vec![0.0; p])?;
    Ok(to_fit(min, p, None, y.len()))
}

/// TMA fit at fixed `r`, multi-started from `init` and `init` with every
/// `psi_i` shifted by +0.1 and -0.1.
pub fn fit_tma_fixed_r(
    y: &[f64],
    orders: &ModelOrders,
    r: f64,
    init: &TmaParams,
) -> Result<FitResult> {
    init.check_lengths(orders)?;
    let inv = check_invertibility(&init.phi, &init.psi)?;
    if !inv.ok {
        return Err(TmaError::NotInvertible { a: inv.a });
    }
    let starts = perturbed_starts(init, &[0.0, 0.1, -0.1]);
    fit_tma_from_starts(y, orders, r, &starts, &FitOptions::default())
}

fn perturbed_starts(base: &TmaParams, shifts: &[f64]) -> Vec<Vec<f64>> {
    shifts
        .iter()
        .map(|s| {
            base.phi
                .iter()
                .copied()
                .chain(base.psi.iter().map(|v| v + s))
                .collect()
        })
        .collect()
}

/// Best (lowest penalised objective, earliest on ties) of the fits from `starts`.
fn fit_tma_from_starts(
    y: &[f64],
    orders: &ModelOrders,
    r: f64,
    starts: &[Vec<f64>],
    opts: &FitOptions,
) -> Result<FitResult> {
    orders.validate()?;
    check_finite(y)?;
    if !r.is_finite() {
        return Err(TmaError::InvalidSpec("threshold must be finite".into()));
    }
    let indicator = regime_indicators(y, orders.d, Some(r));
    let mut ls = LeastSquares::new(y, orders.p, orders.q, indicator, *opts);
    let mut best: Option<Minimum> = None;
    let mut last_err = None;
    for start in starts {
        match ls.minimize(start) {
            Ok(m) => {
                if best.as_ref().is_none_or(|b| m.objective < b.objective) {
                    best = Some(m);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some(m) => Ok(to_fit(m, orders.p, Some(r), y.len())),
        None => Err(last_err.unwrap_or_else(|| TmaError::Numerical("no starting points".into()))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProfileMode {
    /// Left to right, each fit also warm-started from its neighbour's solution.
    #[default]
    Sequential,
    /// Right to left with warm starts; used to check basin independence.
    SequentialReversed,
    /// Independent fits from fixed starts, run on the rayon pool.
    Parallel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdProfile {
    pub grid: ThresholdGrid,
    pub null_fit: FitResult,
    /// One entry per candidate; `None` where the fit failed.
    pub fits: Vec<Option<FitResult>>,
    pub failures: usize,
    pub r_hat: f64,
    pub best: usize,
}

pub fn profile_threshold(y: &[f64], orders: &ModelOrders, grid: &ThresholdGrid) -> Result<ThresholdProfile> {
    let null_fit = fit_ma(y, orders.p)?;
    profile_threshold_with(y, orders, grid, null_fit, ProfileMode::Sequential, &FitOptions::default())
}

pub fn profile_threshold_with(
    y: &[f64],
    orders: &ModelOrders,
    grid: &ThresholdGrid,
    null_fit: FitResult,
    mode: ProfileMode,
    opts: &FitOptions,
) -> Result<ThresholdProfile> {
    orders.validate()?;
    if grid.is_empty() {
        return Err(TmaError::DegenerateGrid("empty grid".into()));
    }
    let null_start = TmaParams {
        phi: null_fit.params.phi.clone(),
        psi: vec![0.0; orders.q],
        r: None,
    };
    let fixed = perturbed_starts(&null_start, &[0.0, 0.1, -0.1]);
    let m = grid.len();
    let fits: Vec<Option<FitResult>> = match mode {
        ProfileMode::Parallel => {
            let starts = perturbed_starts(&null_start, &[0.0, 0.1, -0.1, 0.2, -0.2]);
            grid.candidates()
                .par_iter()
                .map(|&r| fit_tma_from_starts(y, orders, r, &starts, opts).ok())
                .collect()
        }
        ProfileMode::Sequential | ProfileMode::SequentialReversed => {
            let order: Vec<usize> = if mode == ProfileMode::Sequential {
                (0..m).collect()
            } else {
                (0..m).rev().collect()
            };
            let mut out = vec![None; m];
            let mut warm: Option<Vec<f64>> = None;
            for i in order {
                let mut starts = fixed.clone();
                if let Some(w) = &warm {
                    starts.push(w.clone());
                }
                let fit = fit_tma_from_starts(y, orders, grid.candidates()[i], &starts, opts).ok();
                if let Some(f) = &fit {
                    warm = Some(f.params.phi.iter().chain(&f.params.psi).copied().collect());
                }
                out[i] = fit;
            }
            out
        }
    };
    let failures = fits.iter().filter(|f| f.is_none()).count();
    let mut best: Option<usize> = None;
    for (i, f) in fits.iter().enumerate() {
        if let Some(f) = f {
            // strict comparison keeps the smallest r on ties
            if best.is_none_or(|b| f.sse < fits[b].as_ref().unwrap().sse) {
                best = Some(i);
            }
        }
    }
    let best = best.ok_or_else(|| TmaError::Numerical("every threshold fit failed".into()))?;
    Ok(ThresholdProfile {
        r_hat: grid.candidates()[best],
        grid: grid.clone(),
        null_fit,
        fits,
        failures,
        best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::residuals::{residuals_ma, residuals_tma, sse};
    use crate::simulate::{simulate_path, InnovationSpec};
    use approx::assert_abs_diff_eq;

    fn tma_data(phi: f64, psi: f64, r: f64, d: usize, n: usize, seed: u64) -> Vec<f64> {
        let o = ModelOrders::new(1, 1, d).unwrap();
        let params = TmaParams::new(vec![phi], vec![psi], r);
        simulate_path(&o, &params, n, 200, &InnovationSpec::normal(1.0, seed, 0))
            .unwrap()
            .into_inner()
    }

    /// Grid search over phi in (-0.99, 0.99) with step 1e-3.
    fn ma1_grid_oracle(y: &[f64]) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for k in -990..=990 {
            let phi = k as f64 * 1e-3;
            let s = sse(&residuals_ma(y, &[phi]).unwrap());
            if s < best.0 {
                best = (s, phi);
            }
        }
        best.1
    }

    #[test]
    fn grid_from_order_statistics() {
        let y: Vec<f64> = (1..=10).map(f64::from).collect();
        let g = threshold_grid(&y, 0.1, 0.9, 20).unwrap();
        assert_eq!(g.candidates(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let thin = threshold_grid(&y, 0.1, 0.9, 3).unwrap();
        assert_eq!(thin.candidates(), &[1.0, 5.0, 9.0]);
    }

    #[test]
    fn grid_errors() {
        assert!(matches!(
            threshold_grid(&[2.0; 50], 0.1, 0.9, 10),
            Err(TmaError::DegenerateGrid(_))
        ));
        assert!(matches!(
            threshold_grid(&[1.0, 2.0], 0.9, 0.1, 10),
            Err(TmaError::InvalidSpec(_))
        ));
    }

    #[test]
    fn grid_endpoints_near_normal_quantiles() {
        let y = crate::simulate::gen_innovations(&InnovationSpec::normal(1.0, 77, 0), 400).unwrap();
        let g = threshold_grid(&y, 0.1, 0.9, 60).unwrap();
        let c = g.candidates();
        assert!(c.len() <= 60);
        assert!((c[0] + 1.2816).abs() < 0.25, "{}", c[0]);
        assert!((c[c.len() - 1] - 1.2816).abs() < 0.25);
    }

    #[test]
    fn fit_ma_agrees_with_grid_oracle() {
        for (phi0, seed) in [(0.5, 1u64), (0.0, 2), (-0.5, 3)] {
            let y = tma_data(phi0, 0.0, 0.0, 1, 2000, seed);
            let fit = fit_ma(&y, 1).unwrap();
            assert!(fit.converged);
            let phi = fit.params.phi[0];
            assert!((phi - phi0).abs() < 0.06, "phi {phi} vs {phi0}");
            let oracle = ma1_grid_oracle(&y);
            assert!((phi - oracle).abs() <= 1e-3, "optimizer {phi} vs grid {oracle}");
            assert_abs_diff_eq!(fit.sigma2, fit.sse / 2000.0);
        }
    }

    #[test]
    fn fit_ma_is_scale_homogeneous() {
        let y = tma_data(0.5, 0.0, 0.0, 1, 1000, 5);
        let y10: Vec<f64> = y.iter().map(|v| v * 10.0).collect();
        let a = fit_ma(&y, 1).unwrap();
        let b = fit_ma(&y10, 1).unwrap();
        assert_abs_diff_eq!(a.params.phi[0], b.params.phi[0], epsilon = 1e-8);
        assert_abs_diff_eq!(b.sse / a.sse, 100.0, epsilon = 1e-8);
    }

    #[test]
    fn fit_ma_needs_data() {
        assert!(matches!(fit_ma(&[1.0; 10], 1), Err(TmaError::Data(_))));
    }

    #[test]
    fn tma_fit_under_null_keeps_psi_small() {
        let y = tma_data(0.5, 0.0, 0.0, 2, 2000, 6);
        let o = ModelOrders::new(1, 1, 2).unwrap();
        let ma = fit_ma(&y, 1).unwrap();
        let init = TmaParams::new(ma.params.phi.clone(), vec![0.0], 0.0);
        for r in [-0.8, 0.0, 0.8] {
            let fit = fit_tma_fixed_r(&y, &o, r, &init).unwrap();
            assert!(fit.converged, "r={r}");
            assert!(fit.params.psi[0].abs() < 0.1, "r={r} psi={}", fit.params.psi[0]);
            assert!(fit.sse <= ma.sse);
            // oracle: refine psi on a grid with phi held at the fitted value
            let mut best = (f64::INFINITY, 0.0);
            for k in -300..=300 {
                let psi = fit.params.psi[0] + k as f64 * 1e-4;
                let p = TmaParams::new(fit.params.phi.clone(), vec![psi], r);
                let s = sse(&residuals_tma(&y, &p, &o).unwrap());
                if s < best.0 {
                    best = (s, psi);
                }
            }
            assert!((best.1 - fit.params.psi[0]).abs() <= 1e-4);
        }
    }

    #[test]
    fn tma_fit_recovers_alternative() {
        let y = tma_data(0.5, -0.5, 0.0, 2, 5000, 7);
        let o = ModelOrders::new(1, 1, 2).unwrap();
        let ma = fit_ma(&y, 1).unwrap();
        let init = TmaParams::new(ma.params.phi.clone(), vec![0.0], 0.0);
        let fit = fit_tma_fixed_r(&y, &o, 0.0, &init).unwrap();
        assert!((fit.params.phi[0] - 0.5).abs() < 0.05, "{:?}", fit.params);
        assert!((fit.params.psi[0] + 0.5).abs() < 0.05, "{:?}", fit.params);
        assert!(fit.sse <= ma.sse);
    }

    #[test]
    fn profile_locates_threshold() {
        let y = tma_data(0.5, -0.5, 0.0, 2, 5000, 8);
        let o = ModelOrders::new(1, 1, 2).unwrap();
        let grid = threshold_grid(&y, 0.1, 0.9, 60).unwrap();
        let prof = profile_threshold(&y, &o, &grid).unwrap();
        let c = grid.candidates();
        let k = c.iter().position(|v| *v >= 0.0).unwrap();
        let bracket = [c[k.saturating_sub(1)], c[k]];
        assert!(
            prof.r_hat == bracket[0] || prof.r_hat == bracket[1],
            "r_hat {} not in {:?}",
            prof.r_hat,
            bracket
        );
        assert_eq!(prof.failures, 0);
        let min = prof.fits.iter().flatten().map(|f| f.sse).fold(f64::INFINITY, f64::min);
        assert!(min <= prof.null_fit.sse);
    }

    #[test]
    fn profile_directions_agree() {
        let o = ModelOrders::new(1, 1, 2).unwrap();
        for (psi, seed) in [(0.0, 40u64), (-0.3, 41), (0.5, 42)] {
            let y = tma_data(0.5, psi, 0.0, 2, 400, seed);
            let grid = threshold_grid(&y, 0.1, 0.9, 60).unwrap();
            let null = fit_ma(&y, 1).unwrap();
            let opts = FitOptions::default();
            let fwd = profile_threshold_with(&y, &o, &grid, null.clone(), ProfileMode::Sequential, &opts).unwrap();
            let rev = profile_threshold_with(&y, &o, &grid, null.clone(), ProfileMode::SequentialReversed, &opts).unwrap();
            let par = profile_threshold_with(&y, &o, &grid, null, ProfileMode::Parallel, &opts).unwrap();
            assert_eq!(fwd.r_hat, rev.r_hat);
            assert_eq!(fwd.r_hat, par.r_hat);
        }
    }

    #[test]
    fn single_candidate_profile() {
        let y = tma_data(0.5, 0.0, 0.0, 2, 300, 9);
        let o = ModelOrders::new(1, 1, 2).unwrap();
        let grid = ThresholdGrid::from_candidates(vec![0.3], 0.1, 0.9).unwrap();
        let prof = profile_threshold(&y, &o, &grid).unwrap();
        assert_eq!(prof.r_hat, 0.3);
    }

    #[test]
    fn profile_scale_invariance() {
        let o = ModelOrders::new(1, 1, 2).unwrap();
        let y = tma_data(0.5, -0.3, 0.0, 2, 400, 10);
        let yc: Vec<f64> = y.iter().map(|v| v * 3.0).collect();
        let a = profile_threshold(&y, &o, &threshold_grid(&y, 0.1, 0.9, 60).unwrap()).unwrap();
        let b = profile_threshold(&yc, &o, &threshold_grid(&yc, 0.1, 0.9, 60).unwrap()).unwrap();
        assert_abs_diff_eq!(a.r_hat * 3.0, b.r_hat, epsilon = 1e-12);
        let fa = a.fits[a.best].as_ref().unwrap();
        let fb = b.fits[b.best].as_ref().unwrap();
        assert_abs_diff_eq!(fa.params.phi[0], fb.params.phi[0], epsilon = 1e-7);
        assert_abs_diff_eq!(fa.params.psi[0], fb.params.psi[0], epsilon = 1e-7);
    }

    #[test]
    fn null_profile_gain_is_bounded() {
        // under H0 the sse gain over the MA fit stays O(1) as n grows
        let o = ModelOrders::new(1, 1, 2).unwrap();
        let mean_gain = |n: usize| {
            let mut total = 0.0;
            for seed in 0..10u64 {
                let y = tma_data(0.5, 0.0, 0.0, 2, n, 100 + seed);
                let grid = threshold_grid(&y, 0.1, 0.9, 30).unwrap();
                let prof = profile_threshold(&y, &o, &grid).unwrap();
                let best = prof.fits[prof.best].as_ref().unwrap().sse;
                total += (prof.null_fit.sse - best) / prof.null_fit.sigma2;
            }
            total / 10.0
        };
        let small = mean_gain(400);
        let large = mean_gain(1600);
        assert!(large / small < 2.0, "gain ratio {} ({small} -> {large})", large / small);
    }
}
