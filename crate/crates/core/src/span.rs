//! Stochastic projected approximate Newton.
//!
//! Each iteration samples a batch `B`, sketches the range of `H_B(x_t)` with
//! [`power_range`], and replaces the Hessian by
//!
//! ```text
//! Ĥ_B = U Uᵀ H_B U Uᵀ + λ (I − U Uᵀ)
//! ```
//!
//! whose inverse `U (ZᵀU)⁻¹ Uᵀ + λ⁻¹ (I − U Uᵀ)` with `Z = H_B U` is applied
//! to the full gradient without ever forming a `d × d` matrix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hvp::{extended_hvp, HvpMode};
use crate::linalg::{norm, spectral_norm_sym, sym_eig_small, DenseMatrix, LuFactors};
use crate::objectives::{sample_batch, Batch, Objective};
use crate::rangefinder::{power_range, RangeConfig};
use crate::trace::{OptimizerRun, Stopwatch, TraceRecord};

/// Relative tolerance of the spectral-norm probe.
pub const PROBE_TOL: f64 = 1e-6;
const PROBE_SEED_SALT: u64 = 0x5EED_0F_DA7A;

/// How the complement eigenvalue `λ` is chosen from the captured block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaRule {
    /// `min(½ σ_min(ZᵀU), σ_{m+1}(ZᵀU))`
    Safeguard,
    /// `½ σ_{m+1}(ZᵀU)`
    HalfSigmaNext,
    Fixed(f64),
}

impl std::str::FromStr for LambdaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "safeguard" => Ok(Self::Safeguard),
            "half_sigma_m1" | "half_sigma_next" => Ok(Self::HalfSigmaNext),
            other => other
                .parse::<f64>()
                .ok()
                .filter(|v| *v > 0.0)
                .map(Self::Fixed)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown lambda rule {other:?}"))),
        }
    }
}

/// Low-rank curvature captured at one iterate.
#[derive(Clone, Debug)]
pub struct Subspace {
    u: DenseMatrix,
    z: DenseMatrix,
    small_block: DenseMatrix,
    block_eigenvalues: Vec<f64>,
    lu: LuFactors,
    lambda: f64,
    lambda_min: f64,
    sigma_proxy_m1: f64,
}

impl Subspace {
    /// Completes a subspace from an orthonormal basis `u` (`d × l`, `m < l`).
    pub fn from_basis(
        obj: &Objective<'_>,
        batch: &Batch,
        x: &[f64],
        u: DenseMatrix,
        m: usize,
        mode: HvpMode,
        rule: LambdaRule,
    ) -> Result<Self> {
        let l = u.cols();
        if m >= l {
            return Err(Error::InvalidRankParams(format!("need m < l, got m = {m}, l = {l}")));
        }
        let z = extended_hvp(obj, batch, x, &u, mode)?;
        let small_block = z.tr_matmul(&u)?.symmetrize();
        let eig = sym_eig_small(&small_block)?;
        let smallest = eig.values[l - 1];
        if !(smallest > 0.0) {
            return Err(Error::IndefiniteBlock { min_eig: smallest });
        }
        let lambda_min = 0.5 * smallest;
        let sigma_proxy_m1 = eig.values[m];
        let lambda = match rule {
            LambdaRule::Safeguard => lambda_min.min(sigma_proxy_m1),
            LambdaRule::HalfSigmaNext => 0.5 * sigma_proxy_m1,
            LambdaRule::Fixed(v) if v > 0.0 => v,
            LambdaRule::Fixed(v) => return Err(Error::InvalidConfig(format!("lambda = {v}"))),
        };
        let lu = LuFactors::factor(&small_block)?;
        Ok(Self {
            u,
            z,
            small_block,
            block_eigenvalues: eig.values,
            lu,
            lambda,
            lambda_min,
            sigma_proxy_m1,
        })
    }

    pub fn basis(&self) -> &DenseMatrix {
        &self.u
    }

    /// `Z = H_B U`
    pub fn curvature(&self) -> &DenseMatrix {
        &self.z
    }

    /// Symmetrized `ZᵀU`.
    pub fn small_block(&self) -> &DenseMatrix {
        &self.small_block
    }

    /// Eigenvalues of the small block, descending.
    pub fn block_eigenvalues(&self) -> &[f64] {
        &self.block_eigenvalues
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn sigma_proxy_m1(&self) -> f64 {
        self.sigma_proxy_m1
    }

    pub fn sigma_min(&self) -> f64 {
        *self.block_eigenvalues.last().expect("nonempty block")
    }

    /// Replaces `λ`; used to study rules outside the safeguard.
    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda = {lambda}")));
        }
        self.lambda = lambda;
        Ok(self)
    }

    /// `Ĥ_B⁻¹ g` in `O(d l + l²)` after the block factorization.
    pub fn apply_inverse(&self, g: &[f64]) -> Result<Vec<f64>> {
        let coeffs = self.u.tr_mul_vec(g)?;
        let inner = self.lu.solve_vec(&coeffs)?;
        let in_span = self.u.mul_vec(&inner)?;
        let projected = self.u.mul_vec(&coeffs)?;
        let inv_lambda = 1.0 / self.lambda;
        Ok(g.iter()
            .zip(&in_span)
            .zip(&projected)
            .map(|((gi, s), p)| s + inv_lambda * (gi - p))
            .collect())
    }

    /// `Ĥ_B v` using the captured block.
    pub fn apply_approx(&self, v: &[f64]) -> Result<Vec<f64>> {
        let coeffs = self.u.tr_mul_vec(v)?;
        let projected = self.u.mul_vec(&coeffs)?;
        let mapped = self.u.mul_vec(&self.small_block.mul_vec(&coeffs)?)?;
        Ok(v.iter()
            .zip(&projected)
            .zip(&mapped)
            .map(|((vi, p), s)| s + self.lambda * (vi - p))
            .collect())
    }
}

/// Sketches the batch Hessian at `x` and completes the subspace.
#[allow(clippy::too_many_arguments)]
pub fn build_subspace(
    obj: &Objective<'_>,
    batch: &Batch,
    x: &[f64],
    rc: &RangeConfig,
    seed: u64,
    mode: HvpMode,
    rule: LambdaRule,
) -> Result<Subspace> {
    let u = power_range(obj, batch, x, rc, seed, mode)?;
    Subspace::from_basis(obj, batch, x, u, rc.m, mode, rule)
}

/// `‖Ĥ_B − H_B‖₂`, evaluated matrix-free with exact Hessian products.
pub fn hessian_error_probe(
    s: &Subspace,
    obj: &Objective<'_>,
    batch: &Batch,
    x: &[f64],
    seed: u64,
) -> Result<f64> {
    let u = &s.u;
    let lambda = s.lambda;
    let diff = |v: &[f64]| -> Result<Vec<f64>> {
        let coeffs = u.tr_mul_vec(v)?;
        let pv = u.mul_vec(&coeffs)?;
        let hpv = obj.hvp_exact(batch, x, &pv)?;
        let php = u.mul_vec(&u.tr_mul_vec(&hpv)?)?;
        let hv = obj.hvp_exact(batch, x, v)?;
        Ok((0..v.len())
            .map(|i| php[i] + lambda * (v[i] - pv[i]) - hv[i])
            .collect())
    };
    spectral_norm_sym(diff, obj.dim(), PROBE_TOL, seed)
}

/// Step-size schedule.
#[derive(Clone, Debug, PartialEq)]
pub enum StepSize {
    Constant(f64),
    /// Per-iteration values; the last one repeats.
    Schedule(Vec<f64>),
    /// `σ/(96 λ_min − 16 σ)` with `σ = σ_min(ZᵀU)` standing in for the
    /// unobservable smallest Hessian eigenvalue. Heuristic.
    Auto,
}

impl StepSize {
    fn validate(&self) -> Result<()> {
        let ok = match self {
            Self::Constant(v) => *v > 0.0,
            Self::Schedule(v) => !v.is_empty() && v.iter().all(|e| *e > 0.0),
            Self::Auto => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("step sizes must be positive: {self:?}")))
        }
    }

    pub fn at(&self, t: usize, s: &Subspace) -> f64 {
        match self {
            Self::Constant(v) => *v,
            Self::Schedule(v) => v[t.min(v.len() - 1)],
            Self::Auto => {
                let sigma = s.sigma_min();
                sigma / (96.0 * s.lambda_min() - 16.0 * sigma)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpanConfig {
    pub max_iter: usize,
    pub range: RangeConfig,
    pub batch_size: usize,
    pub step: StepSize,
    pub seed: u64,
    pub grad_tol: f64,
    pub hvp_mode: HvpMode,
    pub lambda_rule: LambdaRule,
    pub probe_hessian_error: bool,
}

impl SpanConfig {
    pub fn new(max_iter: usize, range: RangeConfig, batch_size: usize, step: StepSize) -> Self {
        Self {
            max_iter,
            range,
            batch_size,
            step,
            seed: 0,
            grad_tol: 0.0,
            hvp_mode: HvpMode::default(),
            lambda_rule: LambdaRule::Safeguard,
            probe_hessian_error: false,
        }
    }

    pub fn validate(&self, obj: &Objective<'_>) -> Result<()> {
        self.range.validate(obj.dim())?;
        if self.batch_size == 0 || self.batch_size > obj.n_samples() {
            return Err(Error::BatchTooLarge {
                b: self.batch_size,
                n: obj.n_samples(),
            });
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::InvalidConfig(format!("grad_tol = {}", self.grad_tol)));
        }
        self.hvp_mode.validate()?;
        self.step.validate()
    }
}

/// Mutable optimizer state between steps.
#[derive(Clone, Debug)]
pub struct SpanState {
    pub x: Vec<f64>,
    pub iteration: usize,
    grad: Vec<f64>,
    rng: ChaCha8Rng,
}

impl SpanState {
    pub fn new(obj: &Objective<'_>, x0: Vec<f64>, seed: u64) -> Result<Self> {
        let grad = obj.full_gradient(&x0)?;
        Ok(Self {
            x: x0,
            iteration: 0,
            grad,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn gradient(&self) -> &[f64] {
        &self.grad
    }

    pub fn grad_norm(&self) -> f64 {
        norm(&self.grad)
    }
}

/// One iteration: sample, sketch, invert, step with the full gradient.
pub fn span_step(
    state: &mut SpanState,
    obj: &Objective<'_>,
    cfg: &SpanConfig,
    clock: &mut Stopwatch,
) -> Result<TraceRecord> {
    let batch = sample_batch(obj.n_samples(), cfg.batch_size, &mut state.rng)?;
    let sketch_seed: u64 = state.rng.random();
    let subspace = build_subspace(
        obj,
        &batch,
        &state.x,
        &cfg.range,
        sketch_seed,
        cfg.hvp_mode,
        cfg.lambda_rule,
    )?;
    let hessian_err = if cfg.probe_hessian_error {
        let x = &state.x;
        Some(clock.exclude(|| {
            hessian_error_probe(&subspace, obj, &batch, x, sketch_seed ^ PROBE_SEED_SALT)
        })?)
    } else {
        None
    };

    let eta = cfg.step.at(state.iteration, &subspace);
    let direction = subspace.apply_inverse(&state.grad)?;
    for (xi, di) in state.x.iter_mut().zip(&direction) {
        *xi -= eta * di;
    }
    if !state.x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteResult("SPAN update"));
    }
    state.grad = obj.full_gradient(&state.x)?;
    state.iteration += 1;
    let loss = obj.full_loss(&state.x)?;

    Ok(TraceRecord {
        iteration: state.iteration,
        wall_clock_s: clock.elapsed(),
        loss,
        grad_norm: norm(&state.grad),
        hessian_err,
        lambda_used: Some(subspace.lambda()),
    })
}

/// Runs up to `max_iter` steps, stopping early once `‖∇F‖ ≤ grad_tol`.
pub fn run_span(obj: &Objective<'_>, cfg: &SpanConfig, x0: &[f64]) -> Result<OptimizerRun> {
    cfg.validate(obj)?;
    let mut clock = Stopwatch::start();
    let mut state = SpanState::new(obj, x0.to_vec(), cfg.seed)?;
    let mut trace = Vec::with_capacity(cfg.max_iter);
    for _ in 0..cfg.max_iter {
        if state.grad_norm() <= cfg.grad_tol {
            break;
        }
        trace.push(span_step(&mut state, obj, cfg, &mut clock)?);
    }
    Ok(OptimizerRun { x: state.x, trace })
}

/// Batch size making the sampled Hessian `ε`-close with probability
/// `1 − e^{m−l}` when per-sample Hessians are bounded by `k_bound`:
/// `min{⌈16K²/ε² (l − m + ln 2d)⌉, N}`.
pub fn recommended_batch_size(k_bound: f64, eps: f64, l: usize, m: usize, d: usize, n: usize) -> usize {
    let raw = 16.0 * k_bound * k_bound / (eps * eps) * ((l - m) as f64 + (2.0 * d as f64).ln());
    let b = if raw.is_finite() { raw.ceil().max(1.0) } else { f64::MAX };
    (b.min(n as f64) as usize).max(1)
}
