//! Model orders, parameters, invertibility and companion-matrix products.
//!
//! A TMA(p, q, d) model shifts the first `q` MA coefficients by `psi` when the
//! lag-`d` observation is at or below the threshold `r`:
//!
//! ```text
//! y_t = e_t + sum_i phi_i e_{t-i} + sum_{i<=q} psi_i I(y_{t-d} <= r) e_{t-i}
//! ```
//!
//! Invertibility is checked through the contraction constant
//! `a = max(sum |phi_i|, sum |phi_i + psi_i|)`. With the max-row-sum operator
//! norm, any product of `p` consecutive companion factors has norm at most `a`,
//! so the norm of a `j`-fold product is bounded by `a^floor(j / p)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TmaError};

/// Parameters with `a >= 1 - INVERTIBILITY_MARGIN` are rejected.
pub const INVERTIBILITY_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelOrders {
    pub p: usize,
    pub q: usize,
    pub d: usize,
}

impl ModelOrders {
    pub fn new(p: usize, q: usize, d: usize) -> Result<Self> {
        let orders = ModelOrders { p, q, d };
        orders.validate()?;
        Ok(orders)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.q == 0 || self.d == 0 {
            return Err(TmaError::InvalidOrders(format!(
                "p, q, d must all be positive (got p={}, q={}, d={})",
                self.p, self.q, self.d
            )));
        }
        if self.q > self.p {
            return Err(TmaError::InvalidOrders(format!(
                "q={} exceeds p={}",
                self.q, self.p
            )));
        }
        Ok(())
    }

    /// Number of smooth coefficients, p + q.
    pub fn n_coefficients(&self) -> usize {
        self.p + self.q
    }

    /// The `p = q < d` configuration whose null limit is the Brownian-bridge functional.
    pub fn is_bridge_special_case(&self) -> bool {
        self.p == self.q && self.d > self.p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TmaParams {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    /// Threshold; absent for pure MA use.
    pub r: Option<f64>,
}

impl TmaParams {
    pub fn new(phi: Vec<f64>, psi: Vec<f64>, r: f64) -> Self {
        TmaParams {
            phi,
            psi,
            r: Some(r),
        }
    }

    /// Linear MA parameters (no threshold shift).
    pub fn ma(phi: Vec<f64>) -> Self {
        TmaParams {
            phi,
            psi: Vec::new(),
            r: None,
        }
    }

    pub fn check_lengths(&self, orders: &ModelOrders) -> Result<()> {
        orders.validate()?;
        if self.phi.len() != orders.p {
            return Err(TmaError::InvalidOrders(format!(
                "phi has length {} but p={}",
                self.phi.len(),
                orders.p
            )));
        }
        if self.psi.len() != orders.q {
            return Err(TmaError::InvalidOrders(format!(
                "psi has length {} but q={}",
                self.psi.len(),
                orders.q
            )));
        }
        Ok(())
    }

    /// `psi` zero-padded to the length of `phi`.
    pub fn padded_psi(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.phi.len()];
        for (o, v) in out.iter_mut().zip(&self.psi) {
            *o = *v;
        }
        out
    }

    pub fn invertibility(&self) -> Result<Invertibility> {
        check_invertibility(&self.phi, &self.psi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Invertibility {
    pub ok: bool,
    /// Contraction constant `max(sum |phi_i|, sum |phi_i + psi_i|)`.
    pub a: f64,
}

pub fn contraction_constant(phi: &[f64], psi: &[f64]) -> f64 {
    let high: f64 = phi.iter().map(|v| v.abs()).sum();
    let low: f64 = phi
        .iter()
        .enumerate()
        .map(|(i, v)| (v + psi.get(i).copied().unwrap_or(0.0)).abs())
        .sum();
    high.max(low)
}

pub fn check_invertibility(phi: &[f64], psi: &[f64]) -> Result<Invertibility> {
    if phi.is_empty() {
        return Err(TmaError::InvalidOrders("phi must be nonempty".into()));
    }
    if psi.len() > phi.len() {
        return Err(TmaError::InvalidOrders(format!(
            "psi has length {} but phi only {}",
            psi.len(),
            phi.len()
        )));
    }
    let a = contraction_constant(phi, psi);
    Ok(Invertibility {
        ok: a.is_finite() && a < 1.0 - INVERTIBILITY_MARGIN,
        a,
    })
}

/// Companion matrices of the residual recursion.
///
/// `phi_mat` has first row `-phi`, the identity `I_{p-1}` below-left and a zero
/// last column below row one. `psi_mat` has first row `-psi` (zero padded) and
/// zeros elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct CompanionPair {
    pub phi_mat: DMatrix<f64>,
    pub psi_mat: DMatrix<f64>,
}

impl CompanionPair {
    pub fn dim(&self) -> usize {
        self.phi_mat.nrows()
    }

    /// Contraction constant recovered from the first rows.
    pub fn contraction(&self) -> f64 {
        let p = self.dim();
        let phi: Vec<f64> = (0..p).map(|j| -self.phi_mat[(0, j)]).collect();
        let psi: Vec<f64> = (0..p).map(|j| -self.psi_mat[(0, j)]).collect();
        contraction_constant(&phi, &psi)
    }

    /// `Phi + Psi` when the regime indicator fires, `Phi` otherwise.
    pub fn factor(&self, indicator: bool) -> DMatrix<f64> {
        if indicator {
            &self.phi_mat + &self.psi_mat
        } else {
            self.phi_mat.clone()
        }
    }
}

pub fn companion_matrices(params: &TmaParams, orders: &ModelOrders) -> Result<CompanionPair> {
    params.check_lengths(orders)?;
    let p = orders.p;
    let psi = params.padded_psi();
    let mut phi_mat = DMatrix::zeros(p, p);
    let mut psi_mat = DMatrix::zeros(p, p);
    for j in 0..p {
        phi_mat[(0, j)] = -params.phi[j];
        psi_mat[(0, j)] = -psi[j];
    }
    for i in 1..p {
        phi_mat[(i, i - 1)] = 1.0;
    }
    Ok(CompanionPair { phi_mat, psi_mat })
}

/// Max-absolute-row-sum operator norm.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Norms of the running products `prod_{i=1}^{j} [Phi + Psi * indicator_i]`
/// for `j = 1..=indicators.len()`, multiplied left to right.
pub fn product_norm_sequence(pair: &CompanionPair, indicators: &[bool]) -> Result<Vec<f64>> {
    let a = pair.contraction();
    if !(a < 1.0 - INVERTIBILITY_MARGIN) {
        return Err(TmaError::NotInvertible { a });
    }
    let high = pair.factor(false);
    let low = pair.factor(true);
    let mut prod = DMatrix::identity(pair.dim(), pair.dim());
    let mut out = Vec::with_capacity(indicators.len());
    for &ind in indicators {
        prod = &prod * if ind { &low } else { &high };
        out.push(inf_norm(&prod));
    }
    Ok(out)
}

/// Envelope `a^floor(j / p)` bounding entry `j` (1-based) of [`product_norm_sequence`].
pub fn geometric_envelope(a: f64, p: usize, j: usize) -> f64 {
    a.powi((j / p) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn invertibility_examples() {
        let inv = check_invertibility(&[0.5], &[-0.3]).unwrap();
        assert_abs_diff_eq!(inv.a, 0.5);
        assert!(inv.ok);

        let inv = check_invertibility(&[0.5, 0.4], &[0.2]).unwrap();
        assert_abs_diff_eq!(inv.a, 1.1, epsilon = 1e-15);
        assert!(!inv.ok);

        let inv = check_invertibility(&[0.0], &[0.0]).unwrap();
        assert_eq!(inv.a, 0.0);
        assert!(inv.ok);
    }

    #[test]
    fn empty_phi_is_rejected() {
        assert!(matches!(
            check_invertibility(&[], &[]),
            Err(TmaError::InvalidOrders(_))
        ));
        assert!(check_invertibility(&[0.1], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn margin_rejects_borderline() {
        let inv = check_invertibility(&[1.0 - 1e-10], &[]).unwrap();
        assert!(!inv.ok);
    }

    #[test]
    fn orders_validation() {
        assert!(ModelOrders::new(1, 1, 2).is_ok());
        assert!(ModelOrders::new(1, 2, 1).is_err());
        assert!(ModelOrders::new(0, 0, 1).is_err());
        assert!(ModelOrders::new(2, 1, 0).is_err());
        assert!(ModelOrders::new(1, 1, 2).unwrap().is_bridge_special_case());
        assert!(!ModelOrders::new(1, 1, 1).unwrap().is_bridge_special_case());
        assert!(!ModelOrders::new(2, 1, 3).unwrap().is_bridge_special_case());
    }

    #[test]
    fn companion_layout() {
        let orders = ModelOrders::new(2, 1, 1).unwrap();
        let params = TmaParams::new(vec![0.5, -0.2], vec![0.2], 0.0);
        let pair = companion_matrices(&params, &orders).unwrap();
        assert_eq!(
            pair.phi_mat,
            DMatrix::from_row_slice(2, 2, &[-0.5, 0.2, 1.0, 0.0])
        );
        assert_eq!(
            pair.psi_mat,
            DMatrix::from_row_slice(2, 2, &[-0.2, 0.0, 0.0, 0.0])
        );

        let orders = ModelOrders::new(1, 1, 1).unwrap();
        let params = TmaParams::new(vec![0.5], vec![-0.3], 0.0);
        let pair = companion_matrices(&params, &orders).unwrap();
        assert_eq!(pair.phi_mat[(0, 0)], -0.5);
        assert_eq!(pair.psi_mat[(0, 0)], 0.3);
    }

    #[test]
    fn companion_length_mismatch() {
        let orders = ModelOrders::new(2, 1, 1).unwrap();
        let params = TmaParams::new(vec![0.5], vec![0.2], 0.0);
        assert!(matches!(
            companion_matrices(&params, &orders),
            Err(TmaError::InvalidOrders(_))
        ));
    }

    #[test]
    fn scalar_products() {
        let orders = ModelOrders::new(1, 1, 1).unwrap();
        let params = TmaParams::new(vec![0.5], vec![-0.3], 0.0);
        let pair = companion_matrices(&params, &orders).unwrap();
        let norms = product_norm_sequence(&pair, &[true; 10]).unwrap();
        for (j, n) in norms.iter().enumerate() {
            assert_abs_diff_eq!(*n, 0.2f64.powi(j as i32 + 1), epsilon = 1e-15);
        }
        let norms = product_norm_sequence(&pair, &[false; 10]).unwrap();
        for (j, n) in norms.iter().enumerate() {
            assert_abs_diff_eq!(*n, 0.5f64.powi(j as i32 + 1), epsilon = 1e-15);
        }
    }

    #[test]
    fn product_norm_rejects_non_invertible() {
        let orders = ModelOrders::new(2, 1, 1).unwrap();
        let params = TmaParams::new(vec![0.5, 0.4], vec![0.2], 0.0);
        let pair = companion_matrices(&params, &orders).unwrap();
        assert!(matches!(
            product_norm_sequence(&pair, &[true]),
            Err(TmaError::NotInvertible { .. })
        ));
    }

    /// Direct expansion of the product into an explicit matrix, independent
    /// of the running-product code path.
    fn brute_force_norm(pair: &CompanionPair, inds: &[bool]) -> f64 {
        let p = pair.dim();
        let mut m = DMatrix::<f64>::identity(p, p);
        for &ind in inds {
            let mut f = pair.phi_mat.clone();
            if ind {
                for c in 0..p {
                    f[(0, c)] += pair.psi_mat[(0, c)];
                }
            }
            let mut next = DMatrix::zeros(p, p);
            for i in 0..p {
                for k in 0..p {
                    let mut acc = 0.0;
                    for l in 0..p {
                        acc += m[(i, l)] * f[(l, k)];
                    }
                    next[(i, k)] = acc;
                }
            }
            m = next;
        }
        inf_norm(&m)
    }

    #[test]
    fn decay_p2_random_indicators() {
        use rand::{Rng, SeedableRng};
        let orders = ModelOrders::new(2, 1, 1).unwrap();
        let params = TmaParams::new(vec![0.4, 0.3], vec![0.1], 0.0);
        let a = params.invertibility().unwrap().a;
        assert_abs_diff_eq!(a, 0.8, epsilon = 1e-15);
        let pair = companion_matrices(&params, &orders).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let inds: Vec<bool> = (0..60).map(|_| rng.random()).collect();
        let norms = product_norm_sequence(&pair, &inds).unwrap();
        for j in 1..=60 {
            let oracle = brute_force_norm(&pair, &inds[..j]);
            assert_abs_diff_eq!(norms[j - 1], oracle, epsilon = 1e-14);
            assert!(norms[j - 1] <= geometric_envelope(a, 2, j) * (1.0 + 1e-12));
        }
        // eventual slope of log-norms bounded by log(a)/p
        let slope = (norms[59].ln() - norms[19].ln()) / 40.0;
        assert!(slope <= a.ln() / 2.0 + 1e-9, "slope {slope}");
    }

    proptest! {
        #[test]
        fn negating_pairs_preserves_a(
            phi in prop::collection::vec(-0.5f64..0.5, 1..4),
            flip in prop::collection::vec(any::<bool>(), 4),
        ) {
            let psi: Vec<f64> = phi.iter().map(|v| 0.3 - v).collect();
            let a = contraction_constant(&phi, &psi);
            let phi2: Vec<f64> = phi.iter().zip(&flip).map(|(v, f)| if *f { -v } else { *v }).collect();
            let psi2: Vec<f64> = psi.iter().zip(&flip).map(|(v, f)| if *f { -v } else { *v }).collect();
            prop_assert_eq!(a, contraction_constant(&phi2, &psi2));
        }

        #[test]
        fn p_step_contraction(
            phi in prop::collection::vec(-0.3f64..0.3, 1..4),
            shift in -0.2f64..0.2,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let p = phi.len();
            let params = TmaParams::new(phi.clone(), vec![shift], 0.0);
            let orders = ModelOrders::new(p, 1, 1).unwrap();
            let a = params.invertibility().unwrap().a;
            prop_assume!(a < 0.999);
            let pair = companion_matrices(&params, &orders).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let inds: Vec<bool> = (0..30).map(|_| rng.random()).collect();
            let norms = product_norm_sequence(&pair, &inds).unwrap();
            for j in 1..=(30 - p) {
                prop_assert!(norms[j + p - 1] <= a * norms[j - 1] + 1e-14);
            }
            // entry j ignores indicators after position j
            let mut altered = inds.clone();
            for v in altered.iter_mut().skip(10) { *v = !*v; }
            let norms2 = product_norm_sequence(&pair, &altered).unwrap();
            prop_assert_eq!(&norms[..10], &norms2[..10]);
        }
    }
}
