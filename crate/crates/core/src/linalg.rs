//! Dense kernels used throughout the optimizer: Gaussian sketches, Householder
//! QR, a cyclic Jacobi eigensolver for small symmetric blocks, pivoted LU
//! solves and a matrix-free spectral norm estimate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Largest matrix accepted by [`sym_eig_small`].
pub const SMALL_EIG_CAP: usize = 2048;
const JACOBI_MAX_SWEEPS: usize = 100;
const QR_RANK_TOL: f64 = 1e-12;
const SOLVE_COND_LIMIT: f64 = 1e12;

/// Row-major dense matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Builds a matrix whose columns are the given equal-length vectors.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        let mut m = Self::zeros(rows, columns.len());
        for (j, c) in columns.iter().enumerate() {
            m.set_column(j, c)?;
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) -> Result<()> {
        if values.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                found: values.len(),
            });
        }
        for (i, &v) in values.iter().enumerate() {
            self.set(i, j, v);
        }
        Ok(())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `self · other`
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                axpy(a, other.row(k), out_row);
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other` without forming the transpose.
    pub fn tr_matmul(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                found: other.rows,
            });
        }
        let mut out = Self::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(a, b_row, &mut out.data[i * other.cols..(i + 1) * other.cols]);
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: v.len(),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// `selfᵀ · v`
    pub fn tr_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                found: v.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            axpy(vi, self.row(i), &mut out);
        }
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows * self.cols,
                found: other.rows * other.cols,
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `(A + Aᵀ) / 2` for a square matrix.
    pub fn symmetrize(&self) -> Self {
        debug_assert_eq!(self.rows, self.cols);
        Self::from_fn(self.rows, self.cols, |i, j| {
            0.5 * (self.get(i, j) + self.get(j, i))
        })
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha · x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Deterministic standard-normal matrix keyed by `seed`.
pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gaussian_matrix_from(rows, cols, &mut rng)
}

pub fn gaussian_matrix_from(rows: usize, cols: usize, rng: &mut impl Rng) -> DenseMatrix {
    let data = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    DenseMatrix { rows, cols, data }
}

/// Thin orthonormal factor of a Householder QR of a tall matrix.
pub fn qr_orthonormal(y: &DenseMatrix) -> Result<DenseMatrix> {
    let (d, l) = (y.rows, y.cols);
    if l > d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: l,
        });
    }
    // Column-major working copy: reflections touch whole columns.
    let mut a: Vec<Vec<f64>> = y.columns();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(l);
    let mut r_diag = Vec::with_capacity(l);

    for k in 0..l {
        let x = &a[k][k..];
        let xnorm = norm(x);
        if xnorm == 0.0 || !xnorm.is_finite() {
            return Err(Error::RankDeficient { ratio: 0.0 });
        }
        let alpha = if x[0] >= 0.0 { -xnorm } else { xnorm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vnorm = norm(&v);
        if vnorm > 0.0 {
            v.iter_mut().for_each(|e| *e /= vnorm);
        }
        for col in a.iter_mut().skip(k) {
            let tail = &mut col[k..];
            let proj = 2.0 * dot(&v, tail);
            axpy(-proj, &v, tail);
        }
        r_diag.push(alpha.abs());
        reflectors.push(v);
    }

    let rmax = r_diag.iter().cloned().fold(0.0, f64::max);
    let rmin = r_diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if l > 0 && rmin <= QR_RANK_TOL * rmax {
        return Err(Error::RankDeficient { ratio: rmin / rmax });
    }

    let mut q: Vec<Vec<f64>> = (0..l)
        .map(|j| {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            e
        })
        .collect();
    for (k, v) in reflectors.iter().enumerate().rev() {
        for col in q.iter_mut() {
            let tail = &mut col[k..];
            let proj = 2.0 * dot(v, tail);
            axpy(-proj, v, tail);
        }
    }
    DenseMatrix::from_columns(&q)
}

/// Eigenvalues (descending) and orthonormal eigenvectors (as columns).
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

impl EigenPairs {
    /// `V diag(values) Vᵀ`
    pub fn reconstruct(&self) -> DenseMatrix {
        let n = self.vectors.rows();
        let k = self.values.len();
        DenseMatrix::from_fn(n, n, |i, j| {
            (0..k)
                .map(|c| self.vectors.get(i, c) * self.values[c] * self.vectors.get(j, c))
                .sum()
        })
    }
}

/// Cyclic Jacobi eigensolver for small symmetric matrices. The input is
/// symmetrized first.
pub fn sym_eig_small(a: &DenseMatrix) -> Result<EigenPairs> {
    let n = a.rows;
    if a.cols != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.cols,
        });
    }
    if n > SMALL_EIG_CAP {
        return Err(Error::DimensionTooLarge {
            dim: n,
            cap: SMALL_EIG_CAP,
        });
    }
    let mut m = a.symmetrize();
    let mut v = DenseMatrix::identity(n);
    let scale = m.frobenius_norm();

    let mut converged = n <= 1 || scale == 0.0;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j).powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                rotate(&mut m, p, q, c, s);
                m.set(p, q, 0.0);
                m.set(q, p, 0.0);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: JACOBI_MAX_SWEEPS,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).total_cmp(&m.get(i, i)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let vectors = DenseMatrix::from_fn(n, n, |i, c| v.get(i, order[c]));
    Ok(EigenPairs { values, vectors })
}

// A <- Jᵀ A J for the (p, q) plane rotation.
fn rotate(m: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    rotate_columns(m, p, q, c, s);
    let n = m.cols;
    for k in 0..n {
        let mp = m.data[p * n + k];
        let mq = m.data[q * n + k];
        m.data[p * n + k] = c * mp - s * mq;
        m.data[q * n + k] = s * mp + c * mq;
    }
}

fn rotate_columns(m: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let n = m.cols;
    for k in 0..m.rows {
        let row = &mut m.data[k * n..(k + 1) * n];
        let mp = row[p];
        let mq = row[q];
        row[p] = c * mp - s * mq;
        row[q] = s * mp + c * mq;
    }
}

/// LU factorization with partial pivoting.
#[derive(Clone, Debug)]
pub struct LuFactors {
    n: usize,
    lu: DenseMatrix,
    perm: Vec<usize>,
}

impl LuFactors {
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        let n = a.rows;
        if a.cols != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: a.cols,
            });
        }
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (piv, pmax) = (k..n)
                .map(|i| (i, lu.get(i, k).abs()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if pmax == 0.0 || !pmax.is_finite() {
                return Err(Error::SingularSystem { ratio: 0.0 });
            }
            if piv != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, piv * n + j);
                }
                perm.swap(k, piv);
            }
            let pivot = lu.get(k, k);
            for i in k + 1..n {
                let f = lu.get(i, k) / pivot;
                lu.set(i, k, f);
                if f != 0.0 {
                    for j in k + 1..n {
                        let v = lu.get(i, j) - f * lu.get(k, j);
                        lu.set(i, j, v);
                    }
                }
            }
        }
        let pivots: Vec<f64> = (0..n).map(|i| lu.get(i, i).abs()).collect();
        let pmax = pivots.iter().cloned().fold(0.0, f64::max);
        let pmin = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
        if n > 0 && pmax / pmin > SOLVE_COND_LIMIT {
            return Err(Error::SingularSystem { ratio: pmin / pmax });
        }
        Ok(Self { n, lu, perm })
    }

    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s = dot(&self.lu.row(i)[..i], &x[..i]);
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s = dot(&self.lu.row(i)[i + 1..], &x[i + 1..]);
            x[i] = (x[i] - s) / self.lu.get(i, i);
        }
        Ok(x)
    }

    pub fn solve(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        let cols = b
            .columns()
            .iter()
            .map(|c| self.solve_vec(c))
            .collect::<Result<Vec<_>>>()?;
        let mut out = DenseMatrix::from_columns(&cols)?;
        if cols.is_empty() {
            out = DenseMatrix::zeros(self.n, 0);
        }
        Ok(out)
    }
}

/// Solves `A X = B` for a small square `A`.
pub fn solve_small(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if b.rows != a.rows {
        return Err(Error::DimensionMismatch {
            expected: a.rows,
            found: b.rows,
        });
    }
    LuFactors::factor(a)?.solve(b)
}

const LANCZOS_MAX_STEPS: usize = 600;

/// Largest absolute eigenvalue of a symmetric operator given only its action.
///
/// Runs Lanczos with full reorthogonalization from a seeded Gaussian start
/// and stops once the Ritz residual of the dominant Ritz value drops below
/// `tol` relative to that value, or the Krylov space is exhausted.
pub fn spectral_norm_sym<F>(mut apply: F, d: usize, tol: f64, seed: u64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if d == 0 {
        return Ok(0.0);
    }
    let mut q0 = gaussian_matrix(d, 1, seed).into_data();
    let n0 = norm(&q0);
    q0.iter_mut().for_each(|v| *v /= n0);

    let mut basis: Vec<Vec<f64>> = vec![q0];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut scale = 0.0f64;
    let cap = d.min(LANCZOS_MAX_STEPS);

    for k in 0..cap {
        let qk = &basis[k];
        let mut w = apply(qk)?;
        if w.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: w.len(),
            });
        }
        if !w.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteResult("spectral norm probe"));
        }
        scale = scale.max(norm(&w));
        let alpha = dot(qk, &w);
        alphas.push(alpha);
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                axpy(-c, q, &mut w);
            }
        }
        let beta = norm(&w);

        let check = k < 50 || k % 5 == 0 || k + 1 == cap || beta <= 1e-13 * scale;
        if check {
            let (theta, last) = dominant_ritz(&alphas, &betas)?;
            let exhausted = k + 1 == d || beta <= 1e-13 * scale.max(f64::MIN_POSITIVE);
            if exhausted || beta * last.abs() <= tol * theta.abs() {
                return Ok(theta.abs());
            }
        }
        if k + 1 == cap {
            break;
        }
        betas.push(beta);
        w.iter_mut().for_each(|v| *v /= beta);
        basis.push(w);
    }
    Err(Error::NoConvergence { iterations: cap })
}

// Ritz value of largest magnitude and the last component of its eigenvector.
fn dominant_ritz(alphas: &[f64], betas: &[f64]) -> Result<(f64, f64)> {
    let k = alphas.len();
    let t = DenseMatrix::from_fn(k, k, |i, j| {
        if i == j {
            alphas[i]
        } else if j == i + 1 {
            betas[i]
        } else if i == j + 1 {
            betas[j]
        } else {
            0.0
        }
    });
    let eig = sym_eig_small(&t)?;
    let idx = if eig.values[0].abs() >= eig.values[k - 1].abs() {
        0
    } else {
        k - 1
    };
    Ok((eig.values[idx], eig.vectors.get(k - 1, idx)))
}

/// Full symmetric eigendecomposition for larger dense matrices (values
/// descending), backed by nalgebra's tridiagonal QR solver.
pub fn sym_eig_dense(a: &DenseMatrix) -> Result<EigenPairs> {
    let n = a.rows;
    if a.cols != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.cols,
        });
    }
    let sym = a.symmetrize();
    let m = nalgebra::DMatrix::from_row_slice(n, n, sym.data());
    let eig = nalgebra::SymmetricEigen::try_new(m, 1e-15, 10_000)
        .ok_or(Error::NoConvergence { iterations: 10_000 })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |i, c| eig.eigenvectors[(i, order[c])]);
    Ok(EigenPairs { values, vectors })
}
