//! Matrix-free Hessian-vector products from gradient differences.

use crate::error::{Error, Result};
use crate::linalg::{norm, DenseMatrix};
use crate::objectives::{Batch, Objective};

/// How `H_B(x) v` is evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HvpMode {
    /// Closed-form product from the objective.
    Analytic,
    /// `(g(x + h v̂) − g(x − h v̂)) ‖v‖ / 2h`
    CentralDifference { fd_scale: f64 },
    /// `(g(x + h v̂) − g(x)) ‖v‖ / h`, the one-sided rule with `C = 1/h`.
    ForwardDifference { fd_scale: f64 },
}

impl Default for HvpMode {
    fn default() -> Self {
        Self::CentralDifference { fd_scale: 1.0 }
    }
}

impl HvpMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Analytic => Ok(()),
            Self::CentralDifference { fd_scale } | Self::ForwardDifference { fd_scale } => {
                if fd_scale > 0.0 && fd_scale.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig(format!("fd_scale = {fd_scale}")))
                }
            }
        }
    }

    /// Finite-difference step for a base point of norm `x_norm`.
    pub fn step(fd_scale: f64, x_norm: f64) -> f64 {
        fd_scale * f64::EPSILON.sqrt() * (1.0 + x_norm)
    }
}

impl std::str::FromStr for HvpMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Self::Analytic),
            "finite_difference" | "central" => Ok(Self::CentralDifference { fd_scale: 1.0 }),
            "forward" => Ok(Self::ForwardDifference { fd_scale: 1.0 }),
            other => Err(Error::InvalidConfig(format!("unknown hvp mode {other:?}"))),
        }
    }
}

pub fn hvp(obj: &Objective<'_>, batch: &Batch, x: &[f64], v: &[f64], mode: HvpMode) -> Result<Vec<f64>> {
    if v.len() != obj.dim() {
        return Err(Error::DimensionMismatch {
            expected: obj.dim(),
            found: v.len(),
        });
    }
    let vnorm = norm(v);
    if vnorm == 0.0 {
        return Ok(vec![0.0; v.len()]);
    }
    let out = match mode {
        HvpMode::Analytic => obj.hvp_exact(batch, x, v)?,
        HvpMode::CentralDifference { fd_scale } => {
            let h = HvpMode::step(fd_scale, norm(x));
            let c = h / vnorm;
            let xp: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + c * b).collect();
            let xm: Vec<f64> = x.iter().zip(v).map(|(a, b)| a - c * b).collect();
            let gp = obj.gradient(batch, &xp)?;
            let gm = obj.gradient(batch, &xm)?;
            let s = vnorm / (2.0 * h);
            gp.iter().zip(&gm).map(|(a, b)| (a - b) * s).collect()
        }
        HvpMode::ForwardDifference { fd_scale } => {
            let h = HvpMode::step(fd_scale, norm(x));
            let c = h / vnorm;
            let xp: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + c * b).collect();
            let gp = obj.gradient(batch, &xp)?;
            let g0 = obj.gradient(batch, x)?;
            let s = vnorm / h;
            gp.iter().zip(&g0).map(|(a, b)| (a - b) * s).collect()
        }
    };
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::NonFiniteResult("Hessian-vector product"))
    }
}

/// `H_B(x) V`, one product per column, all on the same batch.
pub fn extended_hvp(
    obj: &Objective<'_>,
    batch: &Batch,
    x: &[f64],
    v: &DenseMatrix,
    mode: HvpMode,
) -> Result<DenseMatrix> {
    if v.rows() != obj.dim() {
        return Err(Error::DimensionMismatch {
            expected: obj.dim(),
            found: v.rows(),
        });
    }
    if mode == HvpMode::Analytic {
        let out = obj.hvp_exact_block(batch, x, v)?;
        return if out.is_finite() {
            Ok(out)
        } else {
            Err(Error::NonFiniteResult("Hessian-vector product"))
        };
    }
    let columns = v.columns();
    let products = map_columns(&columns, |c| hvp(obj, batch, x, c, mode))?;
    if products.is_empty() {
        return Ok(DenseMatrix::zeros(v.rows(), 0));
    }
    DenseMatrix::from_columns(&products)
}

#[cfg(feature = "parallel")]
fn map_columns<F>(columns: &[Vec<f64>], f: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    use rayon::prelude::*;
    columns.par_iter().map(|c| f(c)).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_columns<F>(columns: &[Vec<f64>], f: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    columns.iter().map(|c| f(c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, gaussian_matrix};
    use crate::objectives::{Dataset, ObjectiveConfig};
    use proptest::prelude::*;

    fn logistic_data(n: usize, d: usize, seed: u64) -> Dataset {
        let feats = gaussian_matrix(n, d, seed).into_data();
        let labels = (0..n).map(|i| if (i * 7 + seed as usize) % 3 == 0 { 1.0 } else { -1.0 }).collect();
        Dataset::new(d, feats, labels).unwrap()
    }

    fn rel(a: &[f64], b: &[f64]) -> f64 {
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        norm(&diff) / norm(b).max(1e-300)
    }

    #[test]
    fn quadratic_is_exact_in_every_mode() {
        let cfg = ObjectiveConfig::quadratic(vec![1.0, 2.0, 3.0]);
        let data = Dataset::empty(3);
        let obj = Objective::new(&cfg, &data).unwrap();
        let b = obj.full_batch();
        let x = [0.3, -1.0, 2.0];
        for mode in [
            HvpMode::Analytic,
            HvpMode::default(),
            HvpMode::ForwardDifference { fd_scale: 1.0 },
        ] {
            let hv = hvp(&obj, &b, &x, &[1.0, 1.0, 1.0], mode).unwrap();
            assert!(rel(&hv, &[1.0, 2.0, 3.0]) < 1e-7, "{mode:?} {hv:?}");
        }
        // at the origin the perturbed gradients are exact multiples of v
        let hv = hvp(&obj, &b, &[0.0; 3], &[1.0, 1.0, 1.0], HvpMode::default()).unwrap();
        assert!(rel(&hv, &[1.0, 2.0, 3.0]) < 1e-10);
    }

    #[test]
    fn zero_direction_short_circuits() {
        let cfg = ObjectiveConfig::quadratic(vec![1.0, 2.0]);
        let data = Dataset::empty(2);
        let obj = Objective::new(&cfg, &data).unwrap();
        let hv = hvp(&obj, &obj.full_batch(), &[f64::MAX, 0.0], &[0.0, 0.0], HvpMode::default()).unwrap();
        assert_eq!(hv, vec![0.0, 0.0]);
    }

    #[test]
    fn overflow_is_reported() {
        let cfg = ObjectiveConfig::quadratic(vec![1e308, 1e308]);
        let data = Dataset::empty(2);
        let obj = Objective::new(&cfg, &data).unwrap();
        let r = hvp(&obj, &obj.full_batch(), &[1e10, 1e10], &[1.0, 0.0], HvpMode::default());
        assert!(matches!(r, Err(Error::NonFiniteResult(_))));
    }

    #[test]
    fn finite_difference_matches_analytic_on_logistic() {
        let data = logistic_data(60, 10, 3);
        let cfg = ObjectiveConfig::logistic(0.01);
        let obj = Objective::new(&cfg, &data).unwrap();
        let b = obj.full_batch();
        let x = gaussian_matrix(10, 1, 4).into_data();
        let v = gaussian_matrix(10, 1, 5).into_data();
        let fd = hvp(&obj, &b, &x, &v, HvpMode::default()).unwrap();
        let ex = hvp(&obj, &b, &x, &v, HvpMode::Analytic).unwrap();
        assert!(rel(&fd, &ex) < 1e-6);
    }

    #[test]
    fn extended_product_reconstructs_hessian() {
        let cfg = ObjectiveConfig::quadratic(vec![1.0, 2.0, 3.0]);
        let data = Dataset::empty(3);
        let obj = Objective::new(&cfg, &data).unwrap();
        let out = extended_hvp(&obj, &obj.full_batch(), &[0.0; 3], &DenseMatrix::identity(3), HvpMode::default()).unwrap();
        assert!(out.sub(&DenseMatrix::from_diag(&[1.0, 2.0, 3.0])).unwrap().max_abs() < 1e-10);

        let mut v = gaussian_matrix(3, 2, 1);
        v.set_column(1, &[0.0; 3]).unwrap();
        let out = extended_hvp(&obj, &obj.full_batch(), &[0.0; 3], &v, HvpMode::default()).unwrap();
        assert_eq!(out.column(1), vec![0.0; 3]);
    }

    #[test]
    fn extended_product_matches_dense_logistic() {
        let data = logistic_data(80, 15, 9);
        let cfg = ObjectiveConfig::logistic(0.05);
        let obj = Objective::new(&cfg, &data).unwrap();
        let b = obj.full_batch();
        let x = gaussian_matrix(15, 1, 1).into_data();
        let v = gaussian_matrix(15, 4, 2);
        let got = extended_hvp(&obj, &b, &x, &v, HvpMode::default()).unwrap();
        let expect = obj.dense_hessian(&b, &x).unwrap().matmul(&v).unwrap();
        assert!(got.sub(&expect).unwrap().max_abs() < 1e-6);
        let block = extended_hvp(&obj, &b, &x, &v, HvpMode::Analytic).unwrap();
        assert!(block.sub(&expect).unwrap().max_abs() < 1e-12);
        for j in 0..4 {
            let col = obj.hvp_exact(&b, &x, &v.column(j)).unwrap();
            assert!(rel(&block.column(j), &col) < 1e-13);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn symmetry_surrogate(seed in any::<u64>()) {
            let data = logistic_data(40, 8, seed);
            let cfg = ObjectiveConfig::logistic(0.1);
            let obj = Objective::new(&cfg, &data).unwrap();
            let b = obj.full_batch();
            let x = gaussian_matrix(8, 1, seed ^ 1).into_data();
            let u = gaussian_matrix(8, 1, seed ^ 2).into_data();
            let v = gaussian_matrix(8, 1, seed ^ 3).into_data();
            for (mode, tol) in [(HvpMode::default(), 1e-5), (HvpMode::Analytic, 1e-12)] {
                let uhv = dot(&u, &hvp(&obj, &b, &x, &v, mode).unwrap());
                let vhu = dot(&v, &hvp(&obj, &b, &x, &u, mode).unwrap());
                let scale = norm(&u) * norm(&v) * obj.dense_hessian(&b, &x).unwrap().frobenius_norm();
                prop_assert!((uhv - vhu).abs() <= tol * scale);
            }
        }

        #[test]
        fn analytic_linearity(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let data = logistic_data(30, 6, seed);
            let cfg = ObjectiveConfig::huber_svm(0.1);
            let obj = Objective::new(&cfg, &data).unwrap();
            let b = obj.full_batch();
            let x = gaussian_matrix(6, 1, seed ^ 1).into_data();
            let u = gaussian_matrix(6, 1, seed ^ 2).into_data();
            let v = gaussian_matrix(6, 1, seed ^ 3).into_data();
            let comb: Vec<f64> = u.iter().zip(&v).map(|(a, b)| alpha * a + beta * b).collect();
            let lhs = hvp(&obj, &b, &x, &comb, HvpMode::Analytic).unwrap();
            let hu = hvp(&obj, &b, &x, &u, HvpMode::Analytic).unwrap();
            let hv = hvp(&obj, &b, &x, &v, HvpMode::Analytic).unwrap();
            let rhs: Vec<f64> = hu.iter().zip(&hv).map(|(a, b)| alpha * a + beta * b).collect();
            prop_assert!(rel(&lhs, &rhs) <= 1e-12 || norm(&rhs) < 1e-12);
        }
    }
}
