//! Randomized range finder: an orthonormal basis for the dominant action of
//! the batch Hessian, built from a Gaussian sketch pushed through `2q+1`
//! Hessian products.

use crate::error::{Error, Result};
use crate::hvp::{extended_hvp, HvpMode};
use crate::linalg::{gaussian_matrix, qr_orthonormal, DenseMatrix};
use crate::objectives::{Batch, Objective};

const RANK_RETRIES: u64 = 3;
const RETRY_SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RangeConfig {
    /// Sketch width.
    pub l: usize,
    /// Power exponent; `2q + 1` Hessian products are applied.
    pub q: usize,
    /// Target rank used for error accounting.
    pub m: usize,
    /// Re-orthonormalize between products. Span-preserving; keeps columns
    /// from collapsing onto the top eigenvector in floating point.
    pub reorthonormalize: bool,
}

impl RangeConfig {
    pub fn new(l: usize, q: usize, m: usize) -> Self {
        Self {
            l,
            q,
            m,
            reorthonormalize: q >= 3,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.l == 0 || self.l > d {
            return Err(Error::InvalidRankParams(format!(
                "sketch width l = {} must lie in 1..={d}",
                self.l
            )));
        }
        // a full-width sketch captures H_B exactly, so the margin is moot
        if self.m + 4 > self.l && !(self.l == d && self.m < self.l) {
            return Err(Error::InvalidRankParams(format!(
                "need m + 4 <= l, got m = {}, l = {}",
                self.m, self.l
            )));
        }
        Ok(())
    }

    pub fn products(&self) -> usize {
        2 * self.q + 1
    }
}

/// Smallest power exponent for which the `3 σ_{m+1}` approximation bound is
/// guaranteed with probability at least `1 − 6 e^{m−l}`.
pub fn min_power_iterations(d: usize, l: usize, m: usize) -> Result<usize> {
    if m + 4 > l || l > d {
        return Err(Error::InvalidRankParams(format!(
            "need m <= l - 4 <= d - 4, got d = {d}, l = {l}, m = {m}"
        )));
    }
    let (d, l, m) = (d as f64, l as f64, m as f64);
    let arg = 34.0 * (l / (l - m)).sqrt() + 16.0 * l.sqrt() / (l - m + 1.0) * (d - m).sqrt();
    let q = 0.5 * arg.ln() / 1.5f64.ln();
    Ok(q.ceil() as usize)
}

/// Orthonormal `U` spanning `H_B^{2q+1} Ω` for a seeded Gaussian `Ω`.
///
/// A numerically rank-deficient sketch is redrawn with a fresh seed up to
/// three times before the error is returned.
pub fn power_range(
    obj: &Objective<'_>,
    batch: &Batch,
    x: &[f64],
    rc: &RangeConfig,
    seed: u64,
    mode: HvpMode,
) -> Result<DenseMatrix> {
    rc.validate(obj.dim())?;
    let mut last_err = None;
    for attempt in 0..=RANK_RETRIES {
        let s = seed.wrapping_add(attempt.wrapping_mul(RETRY_SEED_STRIDE));
        match sketch_once(obj, batch, x, rc, s, mode) {
            Ok(u) => return Ok(u),
            Err(e @ Error::RankDeficient { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

fn sketch_once(
    obj: &Objective<'_>,
    batch: &Batch,
    x: &[f64],
    rc: &RangeConfig,
    seed: u64,
    mode: HvpMode,
) -> Result<DenseMatrix> {
    let omega = gaussian_matrix(obj.dim(), rc.l, seed);
    let y = power_sketch(obj, batch, x, omega, rc.products(), rc.reorthonormalize, mode)?;
    qr_orthonormal(&y)
}

/// Applies `products` Hessian products to `omega` (`Y_j = H_B Y_{j−1}`),
/// optionally re-orthonormalizing between products. The last product is
/// returned as is.
pub fn power_sketch(
    obj: &Objective<'_>,
    batch: &Batch,
    x: &[f64],
    omega: DenseMatrix,
    products: usize,
    reorthonormalize: bool,
    mode: HvpMode,
) -> Result<DenseMatrix> {
    let mut y = omega;
    for j in 1..=products {
        y = extended_hvp(obj, batch, x, &y, mode)?;
        if reorthonormalize && j < products {
            y = qr_orthonormal(&y)?;
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm;
    use crate::objectives::{Dataset, ObjectiveConfig};

    fn residual_of(u: &DenseMatrix, v: &[f64]) -> f64 {
        let c = u.tr_mul_vec(v).unwrap();
        let p = u.mul_vec(&c).unwrap();
        let r: Vec<f64> = v.iter().zip(&p).map(|(a, b)| a - b).collect();
        norm(&r)
    }

    #[test]
    fn lemma_q_formula_reference_value() {
        // 34·√2 + 16·√20/11·√90 = 109.79…; ½·log_{1.5} = 5.79 → 6
        assert_eq!(min_power_iterations(100, 20, 10).unwrap(), 6);
    }

    #[test]
    fn lemma_q_is_positive_and_monotone_in_d() {
        for l in 5..30 {
            for m in 0..=l - 4 {
                assert!(min_power_iterations(l, l, m).unwrap() >= 1);
            }
        }
        assert!(min_power_iterations(10_000, 20, 10).unwrap() >= min_power_iterations(100, 20, 10).unwrap());
    }

    #[test]
    fn lemma_q_rejects_bad_ranks() {
        assert!(matches!(min_power_iterations(100, 13, 10), Err(Error::InvalidRankParams(_))));
        assert!(matches!(min_power_iterations(10, 20, 10), Err(Error::InvalidRankParams(_))));
    }

    #[test]
    fn scaled_identity_preserves_sketch_span() {
        let cfg = ObjectiveConfig::quadratic(vec![2.5; 8]);
        let data = Dataset::empty(8);
        let obj = Objective::new(&cfg, &data).unwrap();
        let rc = RangeConfig::new(5, 2, 1);
        let u = power_range(&obj, &obj.full_batch(), &[0.0; 8], &rc, 17, HvpMode::default()).unwrap();
        let omega = gaussian_matrix(8, 5, 17);
        for c in omega.columns() {
            assert!(residual_of(&u, &c) <= 1e-8 * norm(&c));
        }
    }

    #[test]
    fn plain_sketch_when_q_is_zero() {
        let spectrum: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let cfg = ObjectiveConfig::quadratic(spectrum.clone());
        let data = Dataset::empty(10);
        let obj = Objective::new(&cfg, &data).unwrap();
        let rc = RangeConfig::new(6, 0, 2);
        let u = power_range(&obj, &obj.full_batch(), &[0.0; 10], &rc, 3, HvpMode::Analytic).unwrap();
        let omega = gaussian_matrix(10, 6, 3);
        for c in omega.columns() {
            let hc: Vec<f64> = c.iter().zip(&spectrum).map(|(a, s)| a * s).collect();
            assert!(residual_of(&u, &hc) <= 1e-10 * norm(&hc));
        }
    }

    #[test]
    fn rejects_invalid_range_config() {
        let cfg = ObjectiveConfig::quadratic(vec![1.0; 6]);
        let data = Dataset::empty(6);
        let obj = Objective::new(&cfg, &data).unwrap();
        let r = power_range(&obj, &obj.full_batch(), &[0.0; 6], &RangeConfig::new(5, 1, 2), 0, HvpMode::Analytic);
        assert!(matches!(r, Err(Error::InvalidRankParams(_))));
        let r = power_range(&obj, &obj.full_batch(), &[0.0; 6], &RangeConfig::new(7, 1, 2), 0, HvpMode::Analytic);
        assert!(matches!(r, Err(Error::InvalidRankParams(_))));
    }

    #[test]
    fn rank_deficiency_is_retried_then_reported() {
        // two nonzero eigenvalues cannot support a width-4 sketch
        let cfg = ObjectiveConfig {
            loss: crate::objectives::LossKind::Logistic,
            reg_a: 0.0,
            spectrum: None,
        };
        let data = Dataset::new(5, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0], vec![1.0, -1.0]).unwrap();
        let obj = Objective::new(&cfg, &data).unwrap();
        let r = power_range(&obj, &obj.full_batch(), &[0.0; 5], &RangeConfig::new(4, 0, 0), 0, HvpMode::Analytic);
        assert!(matches!(r, Err(Error::RankDeficient { .. })));
    }
}
