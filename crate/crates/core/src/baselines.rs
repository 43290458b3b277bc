//! Reference optimizers sharing the SPAN trace interface: gradient descent,
//! SVRG, NewSamp (truncated-eigendecomposition Newton) and LiSSA (stochastic
//! Neumann-series Newton).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{norm, spectral_norm_sym, sym_eig_dense, DenseMatrix, LuFactors};
use crate::objectives::{sample_batch, Batch, Objective, DENSE_HESSIAN_CAP};
use crate::trace::{OptimizerRun, Stopwatch, TraceRecord};

/// Iterate norm beyond which the Neumann recursion is declared divergent.
pub const LISSA_DIVERGENCE_NORM: f64 = 1e8;
/// Safety margin applied to the probed Hessian norm when scaling for LiSSA.
pub const LISSA_SCALE_MARGIN: f64 = 1.25;

fn record(
    obj: &Objective<'_>,
    iteration: usize,
    x: &[f64],
    grad: &[f64],
    clock: &Stopwatch,
    hessian_err: Option<f64>,
) -> Result<TraceRecord> {
    Ok(TraceRecord {
        iteration,
        wall_clock_s: clock.elapsed(),
        loss: obj.full_loss(x)?,
        grad_norm: norm(grad),
        hessian_err,
        lambda_used: None,
    })
}

fn check_dim(obj: &Objective<'_>, x0: &[f64]) -> Result<()> {
    if x0.len() == obj.dim() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: obj.dim(),
            found: x0.len(),
        })
    }
}

fn check_batch(obj: &Objective<'_>, b: usize) -> Result<()> {
    if b == 0 || b > obj.n_samples() {
        Err(Error::BatchTooLarge {
            b,
            n: obj.n_samples(),
        })
    } else {
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GdConfig {
    pub eta: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
}

/// Full-gradient descent `x ← x − η ∇F(x)`.
pub fn run_gd(obj: &Objective<'_>, cfg: &GdConfig, x0: &[f64]) -> Result<OptimizerRun> {
    check_dim(obj, x0)?;
    if !(cfg.eta >= 0.0) {
        return Err(Error::InvalidConfig(format!("eta = {}", cfg.eta)));
    }
    let clock = Stopwatch::start();
    let mut x = x0.to_vec();
    let mut grad = obj.full_gradient(&x)?;
    let mut trace = Vec::with_capacity(cfg.max_iter);
    for t in 0..cfg.max_iter {
        if norm(&grad) <= cfg.grad_tol {
            break;
        }
        for (xi, gi) in x.iter_mut().zip(&grad) {
            *xi -= cfg.eta * gi;
        }
        grad = obj.full_gradient(&x)?;
        trace.push(record(obj, t + 1, &x, &grad, &clock, None)?);
    }
    Ok(OptimizerRun { x, trace })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvrgConfig {
    pub eta: f64,
    /// Outer epochs; one trace row each.
    pub epochs: usize,
    /// Inner steps per epoch; `None` means one pass (`N / b` steps).
    pub inner_steps: Option<usize>,
    pub batch_size: usize,
    pub seed: u64,
    pub grad_tol: f64,
}

/// Variance-reduced gradient `g_B(w) − g_B(x̃) + ∇F(x̃)`.
pub fn svrg_estimator(
    obj: &Objective<'_>,
    batch: &Batch,
    w: &[f64],
    snapshot: &[f64],
    snapshot_grad: &[f64],
) -> Result<Vec<f64>> {
    let gw = obj.gradient(batch, w)?;
    let gs = obj.gradient(batch, snapshot)?;
    Ok(gw
        .iter()
        .zip(&gs)
        .zip(snapshot_grad)
        .map(|((a, b), mu)| a - b + mu)
        .collect())
}

pub fn run_svrg(obj: &Objective<'_>, cfg: &SvrgConfig, x0: &[f64]) -> Result<OptimizerRun> {
    check_dim(obj, x0)?;
    check_batch(obj, cfg.batch_size)?;
    if !(cfg.eta > 0.0) {
        return Err(Error::InvalidConfig(format!("eta = {}", cfg.eta)));
    }
    let inner = cfg
        .inner_steps
        .unwrap_or_else(|| (obj.n_samples() / cfg.batch_size).max(1));
    let clock = Stopwatch::start();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = x0.to_vec();
    let mut grad = obj.full_gradient(&x)?;
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        if norm(&grad) <= cfg.grad_tol {
            break;
        }
        let snapshot = x.clone();
        let mu = grad;
        for _ in 0..inner {
            let batch = sample_batch(obj.n_samples(), cfg.batch_size, &mut rng)?;
            let est = svrg_estimator(obj, &batch, &x, &snapshot, &mu)?;
            for (xi, gi) in x.iter_mut().zip(&est) {
                *xi -= cfg.eta * gi;
            }
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteResult("SVRG update"));
        }
        grad = obj.full_gradient(&x)?;
        trace.push(record(obj, epoch + 1, &x, &grad, &clock, None)?);
    }
    Ok(OptimizerRun { x, trace })
}

/// Regularized rank-`m` inverse from a truncated eigendecomposition:
/// `σ_{m+1}⁻¹ I + Σ_{i≤m} (σ_i⁻¹ − σ_{m+1}⁻¹) u_i u_iᵀ`.
#[derive(Clone, Debug)]
pub struct NewSampInverse {
    top_vectors: Vec<Vec<f64>>,
    top_values: Vec<f64>,
    sigma_next: f64,
    /// `max_{i>m} |σ_{m+1} − σ_i|`, the exact `‖Ĥ − H‖₂`.
    approx_error: f64,
}

impl NewSampInverse {
    pub fn from_hessian(h: &DenseMatrix, m: usize) -> Result<Self> {
        let d = h.rows();
        if m >= d {
            return Err(Error::InvalidRankParams(format!("need m < d, got m = {m}, d = {d}")));
        }
        let eig = sym_eig_dense(h)?;
        let sigma_next = eig.values[m];
        if !(sigma_next > 0.0) {
            return Err(Error::IndefiniteBlock { min_eig: sigma_next });
        }
        let approx_error = eig.values[m..]
            .iter()
            .fold(0.0f64, |acc, s| acc.max((sigma_next - s).abs()));
        Ok(Self {
            top_vectors: (0..m).map(|c| eig.vectors.column(c)).collect(),
            top_values: eig.values[..m].to_vec(),
            sigma_next,
            approx_error,
        })
    }

    pub fn sigma_next(&self) -> f64 {
        self.sigma_next
    }

    pub fn approx_error(&self) -> f64 {
        self.approx_error
    }

    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        let inv_next = 1.0 / self.sigma_next;
        let mut out: Vec<f64> = g.iter().map(|v| v * inv_next).collect();
        for (u, s) in self.top_vectors.iter().zip(&self.top_values) {
            let c = (1.0 / s - inv_next) * crate::linalg::dot(u, g);
            crate::linalg::axpy(c, u, &mut out);
        }
        out
    }

    /// The inverse as an explicit matrix.
    pub fn dense(&self, d: usize) -> DenseMatrix {
        let cols: Vec<Vec<f64>> = (0..d)
            .map(|j| {
                let mut e = vec![0.0; d];
                e[j] = 1.0;
                self.apply(&e)
            })
            .collect();
        DenseMatrix::from_columns(&cols).expect("square")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewSampConfig {
    pub eta: f64,
    pub max_iter: usize,
    pub batch_size: usize,
    pub m: usize,
    pub seed: u64,
    pub grad_tol: f64,
    pub probe_hessian_error: bool,
}

pub fn run_newsamp(obj: &Objective<'_>, cfg: &NewSampConfig, x0: &[f64]) -> Result<OptimizerRun> {
    check_dim(obj, x0)?;
    check_batch(obj, cfg.batch_size)?;
    let d = obj.dim();
    if d > DENSE_HESSIAN_CAP {
        return Err(Error::DimensionTooLarge {
            dim: d,
            cap: DENSE_HESSIAN_CAP,
        });
    }
    if cfg.m >= d {
        return Err(Error::InvalidRankParams(format!("need m < d, got m = {}", cfg.m)));
    }
    let clock = Stopwatch::start();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = x0.to_vec();
    let mut grad = obj.full_gradient(&x)?;
    let mut trace = Vec::with_capacity(cfg.max_iter);
    for t in 0..cfg.max_iter {
        if norm(&grad) <= cfg.grad_tol {
            break;
        }
        let batch = sample_batch(obj.n_samples(), cfg.batch_size, &mut rng)?;
        let h = obj.dense_hessian(&batch, &x)?;
        let inv = NewSampInverse::from_hessian(&h, cfg.m)?;
        let dir = inv.apply(&grad);
        for (xi, di) in x.iter_mut().zip(&dir) {
            *xi -= cfg.eta * di;
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteResult("NewSamp update"));
        }
        grad = obj.full_gradient(&x)?;
        let err = cfg.probe_hessian_error.then(|| inv.approx_error());
        trace.push(record(obj, t + 1, &x, &grad, &clock, err)?);
    }
    Ok(OptimizerRun { x, trace })
}

/// Truncated Neumann series `u_j = g + (I − A) u_{j−1}`, `u_0 = g`, where
/// `apply(j, u)` realizes the (possibly sampled) operator `A` at step `j`.
/// Converges to `A⁻¹ g` when `‖I − A‖ < 1`.
pub fn neumann_estimate<F>(g: &[f64], steps: usize, mut apply: F) -> Result<Vec<f64>>
where
    F: FnMut(usize, &[f64]) -> Result<Vec<f64>>,
{
    let mut u = g.to_vec();
    for j in 1..=steps {
        let au = apply(j, &u)?;
        for ((ui, gi), ai) in u.iter_mut().zip(g).zip(&au) {
            *ui = gi + *ui - ai;
        }
        let n = norm(&u);
        if !(n <= LISSA_DIVERGENCE_NORM) {
            return Err(Error::DivergingSeries { norm: n });
        }
    }
    Ok(u)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LissaConfig {
    pub eta: f64,
    pub max_iter: usize,
    /// Samples per stochastic Hessian product.
    pub batch_size: usize,
    /// Terms of each Neumann series.
    pub inner_steps: usize,
    /// Independent series averaged per step.
    pub s1: usize,
    pub seed: u64,
    pub grad_tol: f64,
    pub probe_hessian_error: bool,
}

/// `1 / (margin · ‖∇²F(x)‖)`, making the scaled Hessian a contraction.
pub fn lissa_scale(obj: &Objective<'_>, x: &[f64], seed: u64) -> Result<f64> {
    let full = obj.full_batch();
    let h_norm = spectral_norm_sym(|v| obj.hvp_exact(&full, x, v), obj.dim(), 1e-6, seed)?;
    if !(h_norm > 0.0) {
        return Err(Error::InvalidConfig("Hessian vanishes at the start point".into()));
    }
    Ok(1.0 / (LISSA_SCALE_MARGIN * h_norm))
}

fn draw_batches(obj: &Objective<'_>, cfg: &LissaConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Batch>> {
    (0..cfg.s1 * cfg.inner_steps)
        .map(|_| sample_batch(obj.n_samples(), cfg.batch_size, rng))
        .collect()
}

/// Averaged LiSSA estimate of `∇²F(x)⁻¹ g` over pre-drawn batches.
pub fn lissa_direction(
    obj: &Objective<'_>,
    x: &[f64],
    g: &[f64],
    batches: &[Batch],
    inner_steps: usize,
    s1: usize,
    scale: f64,
) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; g.len()];
    for r in 0..s1 {
        let series = &batches[r * inner_steps..(r + 1) * inner_steps];
        let u = neumann_estimate(g, inner_steps, |j, u| {
            let hu = obj.hvp_exact(&series[j - 1], x, u)?;
            Ok(hu.into_iter().map(|v| scale * v).collect())
        })?;
        crate::linalg::axpy(1.0, &u, &mut acc);
    }
    let w = scale / s1 as f64;
    Ok(acc.into_iter().map(|v| v * w).collect())
}

/// Explicit matrix of the linear map `g ↦ lissa_direction(g)` for fixed
/// batches, i.e. the inverse-Hessian estimate LiSSA implicitly uses.
pub fn lissa_implied_inverse(
    obj: &Objective<'_>,
    x: &[f64],
    batches: &[Batch],
    inner_steps: usize,
    s1: usize,
    scale: f64,
) -> Result<DenseMatrix> {
    let d = obj.dim();
    let cols = (0..d)
        .map(|j| {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            lissa_direction(obj, x, &e, batches, inner_steps, s1, scale)
        })
        .collect::<Result<Vec<_>>>()?;
    DenseMatrix::from_columns(&cols)
}

/// `‖M⁻¹ − H‖₂` for an implied inverse `M` (not necessarily symmetric).
pub fn implied_hessian_error(implied_inverse: &DenseMatrix, h: &DenseMatrix) -> Result<f64> {
    let d = h.rows();
    let implied = LuFactors::factor(implied_inverse)?.solve(&DenseMatrix::identity(d))?;
    let e = implied.sub(h)?;
    let ete = e.tr_matmul(&e)?;
    let top = sym_eig_dense(&ete)?.values[0].max(0.0);
    Ok(top.sqrt())
}

pub fn run_lissa(obj: &Objective<'_>, cfg: &LissaConfig, x0: &[f64]) -> Result<OptimizerRun> {
    check_dim(obj, x0)?;
    check_batch(obj, cfg.batch_size)?;
    if cfg.s1 == 0 || !(cfg.eta > 0.0) {
        return Err(Error::InvalidConfig("LiSSA needs s1 >= 1 and eta > 0".into()));
    }
    let mut clock = Stopwatch::start();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scale = lissa_scale(obj, x0, cfg.seed)?;
    let mut x = x0.to_vec();
    let mut grad = obj.full_gradient(&x)?;
    let mut trace = Vec::with_capacity(cfg.max_iter);
    for t in 0..cfg.max_iter {
        if norm(&grad) <= cfg.grad_tol {
            break;
        }
        let batches = draw_batches(obj, cfg, &mut rng)?;
        let dir = lissa_direction(obj, &x, &grad, &batches, cfg.inner_steps, cfg.s1, scale)?;
        let err = if cfg.probe_hessian_error {
            let xs = &x;
            Some(clock.exclude(|| -> Result<f64> {
                let m = lissa_implied_inverse(obj, xs, &batches, cfg.inner_steps, cfg.s1, scale)?;
                let h = obj.dense_hessian(&obj.full_batch(), xs)?;
                implied_hessian_error(&m, &h)
            })?)
        } else {
            None
        };
        for (xi, di) in x.iter_mut().zip(&dir) {
            *xi -= cfg.eta * di;
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteResult("LiSSA update"));
        }
        grad = obj.full_gradient(&x)?;
        trace.push(record(obj, t + 1, &x, &grad, &clock, err)?);
    }
    Ok(OptimizerRun { x, trace })
}
