//! Plug-in estimate of the covariance kernel of the limiting Gaussian process.
//!
//! With `U1_t` the MA score at the null fit and `U2_t(r)` the threshold-shift
//! score at `(phi_hat, 0, r)`:
//!
//! ```text
//! Sigma       = (1/n) sum U1_t U1_t'
//! Sigma1(r)   = (1/n) sum U1_t U2_t(r)'
//! Sigma2(r,s) = (1/n) sum U2_t(r) U2_t(s)'
//! K(r,s)      = Sigma2(r,s) - Sigma1(r)' Sigma^{-1} Sigma1(s)
//! ```

use nalgebra::DMatrix;

use crate::error::{Result, TmaError};
use crate::model::ModelOrders;
use crate::residuals::{
    check_finite, regime_indicators, residual_recursion, score_recursion, RegimeCoefficients,
};

#[derive(Debug, Clone, PartialEq)]
pub struct KernelEstimate {
    pub grid: Vec<f64>,
    pub p: usize,
    pub q: usize,
    pub sigma: DMatrix<f64>,
    /// `p x q` per grid point.
    pub sigma1: Vec<DMatrix<f64>>,
    /// `q x q` per ordered pair, row-major over the grid.
    pub sigma2: Vec<DMatrix<f64>>,
    /// `q x q` per ordered pair, row-major over the grid.
    pub k: Vec<DMatrix<f64>>,
    /// Set when `Sigma` needed a ridge to be inverted.
    pub regularized: bool,
}

impl KernelEstimate {
    pub fn m(&self) -> usize {
        self.grid.len()
    }

    pub fn k_at(&self, i: usize, j: usize) -> &DMatrix<f64> {
        &self.k[i * self.m() + j]
    }

    pub fn sigma2_at(&self, i: usize, j: usize) -> &DMatrix<f64> {
        &self.sigma2[i * self.m() + j]
    }
}

pub fn estimate_kernel(
    y: &[f64],
    phi_hat: &[f64],
    orders: &ModelOrders,
    grid: &[f64],
) -> Result<KernelEstimate> {
    orders.validate()?;
    check_finite(y)?;
    if phi_hat.len() != orders.p {
        return Err(TmaError::InvalidOrders(format!(
            "phi_hat has length {} but p={}",
            phi_hat.len(),
            orders.p
        )));
    }
    if grid.is_empty() {
        return Err(TmaError::DegenerateGrid("kernel grid is empty".into()));
    }
    let (n, p, q) = (y.len(), orders.p, orders.q);
    let k = p + q;
    let nf = n as f64;
    // at psi = 0 the residuals and phi-scores do not depend on r
    let coef = RegimeCoefficients::new(phi_hat, &[]);
    let mut eps = vec![0.0; n];
    residual_recursion(y, &coef, &vec![false; n], &mut eps);

    let mut u1 = vec![0.0; n * p];
    let mut u2: Vec<Vec<f64>> = Vec::with_capacity(grid.len());
    let mut scratch = vec![0.0; n * k];
    for (g, &r) in grid.iter().enumerate() {
        let ind = regime_indicators(y, orders.d, Some(r));
        score_recursion(&eps, &coef, q, &ind, &mut scratch);
        if g == 0 {
            for t in 0..n {
                u1[t * p..(t + 1) * p].copy_from_slice(&scratch[t * k..t * k + p]);
            }
        }
        let mut cols = vec![0.0; n * q];
        for t in 0..n {
            cols[t * q..(t + 1) * q].copy_from_slice(&scratch[t * k + p..(t + 1) * k]);
        }
        u2.push(cols);
    }

    let cross = |a: &[f64], da: usize, b: &[f64], db: usize| {
        let mut out = DMatrix::zeros(da, db);
        for t in 0..n {
            let ra = &a[t * da..(t + 1) * da];
            let rb = &b[t * db..(t + 1) * db];
            for i in 0..da {
                for j in 0..db {
                    out[(i, j)] += ra[i] * rb[j];
                }
            }
        }
        out / nf
    };

    let sigma = cross(&u1, p, &u1, p);
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    let (sigma_inv, regularized) = regularized_inverse(&sigma)?;
    let sigma1: Vec<DMatrix<f64>> = u2.iter().map(|c| cross(&u1, p, c, q)).collect();
    let m = grid.len();
    let mut sigma2: Vec<DMatrix<f64>> = Vec::with_capacity(m * m);
    let mut kern: Vec<DMatrix<f64>> = Vec::with_capacity(m * m);
    let projected: Vec<DMatrix<f64>> = sigma1.iter().map(|s1| &sigma_inv * s1).collect();
    for i in 0..m {
        for j in 0..m {
            let (s2, kij) = if j < i {
                (sigma2[j * m + i].transpose(), kern[j * m + i].transpose())
            } else {
                let s2 = cross(&u2[i], q, &u2[j], q);
                let kij = &s2 - sigma1[i].transpose() * &projected[j];
                if i == j {
                    ((&s2 + s2.transpose()) * 0.5, (&kij + kij.transpose()) * 0.5)
                } else {
                    (s2, kij)
                }
            };
            sigma2.push(s2);
            kern.push(kij);
        }
    }
    Ok(KernelEstimate {
        grid: grid.to_vec(),
        p,
        q,
        sigma,
        sigma1,
        sigma2,
        k: kern,
        regularized,
    })
}

/// Inverse of a symmetric PSD matrix, adding `eps I` (doubling from
/// `1e-8 trace / dim`) when the Cholesky factorisation fails.
fn regularized_inverse(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    if let Some(ch) = m.clone().cholesky() {
        return Ok((ch.inverse(), false));
    }
    let dim = m.nrows();
    let mut eps = 1e-8 * m.trace().abs().max(f64::MIN_POSITIVE) / dim as f64;
    for _ in 0..=20 {
        let mut r = m.clone();
        for i in 0..dim {
            r[(i, i)] += eps;
        }
        if let Some(ch) = r.cholesky() {
            return Ok((ch.inverse(), true));
        }
        eps *= 2.0;
    }
    Err(TmaError::KernelDegenerate("Sigma is not invertible".into()))
}
