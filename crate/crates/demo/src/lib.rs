//! WebAssembly bindings behind `www/index.html`. Every export returns a flat
//! `Float64Array`; the layout is documented on each function.

use wasm_bindgen::prelude::*;

use span_core::baselines::{run_gd, run_newsamp, GdConfig, NewSampConfig};
use span_core::datasets::{normalize_rows, synth_logistic, synth_quadratic};
use span_core::hvp::HvpMode;
use span_core::linalg::{gaussian_matrix, norm};
use span_core::objectives::{Objective, ObjectiveConfig};
use span_core::rangefinder::{power_sketch, RangeConfig};
use span_core::span::{build_subspace, hessian_error_probe, run_span, LambdaRule, SpanConfig, StepSize};

const ALIGNED_COSINE: f64 = 0.99;

fn msg(e: span_core::Error) -> String {
    e.to_string()
}

/// Images of `samples` Gaussian vectors under `diag(1,2,3)^(2q+1)`, scaled
/// to unit length with a nonnegative third coordinate.
///
/// Layout: `[aligned_fraction, x₀, y₀, z₀, x₁, y₁, z₁, …]`, where
/// `aligned_fraction` counts images within 0.99 cosine of `e₃`.
pub fn power_projection(q: usize, samples: usize, seed: u64) -> Result<Vec<f64>, String> {
    if samples == 0 {
        return Err("need at least one sample".into());
    }
    let (cfg, data, _) = synth_quadratic(&[1.0, 2.0, 3.0]).map_err(msg)?;
    let obj = Objective::new(&cfg, &data).map_err(msg)?;
    let omega = gaussian_matrix(3, samples, seed);
    let y = power_sketch(&obj, &obj.full_batch(), &[0.0; 3], omega, 2 * q + 1, false, HvpMode::Analytic).map_err(msg)?;
    let mut out = vec![0.0];
    let mut aligned = 0;
    for j in 0..samples {
        let mut col = y.column(j);
        let n = norm(&col);
        let sign = if col[2] < 0.0 { -1.0 } else { 1.0 };
        col.iter_mut().for_each(|v| *v *= sign / n);
        if col[2] >= ALIGNED_COSINE {
            aligned += 1;
        }
        out.extend(col);
    }
    out[0] = aligned as f64 / samples as f64;
    Ok(out)
}

/// Spectrum `1 + 20·decay^i` of the quadratic used by [`hessian_error_grid`].
pub fn decaying_spectrum(d: usize, decay: f64) -> Vec<f64> {
    (0..d).map(|i| 1.0 + 20.0 * decay.powi(i as i32)).collect()
}

/// `‖Ĥ − H‖` on a decaying quadratic for every `q ∈ 0..=q_max` and every
/// sketch width `l ∈ m+4..=l_max`, averaged over `trials` sketches.
///
/// Layout: `[newsamp_error, e(q=0, l=m+4), e(q=0, l=m+5), …, e(q=q_max, l=l_max)]`.
/// The NewSamp figure is the error of the best rank-`m` model with the
/// `(m+1)`-th eigenvalue on the complement.
pub fn hessian_error_grid(
    d: usize,
    decay: f64,
    m: usize,
    l_max: usize,
    q_max: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>, String> {
    if l_max < m + 4 || l_max > d || trials == 0 {
        return Err(format!("need m + 4 <= l_max <= d and trials > 0 (d = {d}, m = {m}, l_max = {l_max})"));
    }
    let spectrum = decaying_spectrum(d, decay);
    let (cfg, data, _) = synth_quadratic(&spectrum).map_err(msg)?;
    let obj = Objective::new(&cfg, &data).map_err(msg)?;
    let b = obj.full_batch();
    let x = vec![0.0; d];
    let mut out = vec![spectrum[m] - spectrum[d - 1]];
    for q in 0..=q_max {
        for l in m + 4..=l_max {
            let mut total = 0.0;
            for t in 0..trials as u64 {
                let s = seed.wrapping_add(1000 * t);
                let sub = build_subspace(&obj, &b, &x, &RangeConfig::new(l, q, m), s, HvpMode::Analytic, LambdaRule::Safeguard)
                    .map_err(msg)?;
                total += hessian_error_probe(&sub, &obj, &b, &x, s ^ 0xD3).map_err(msg)?;
            }
            out.push(total / trials as f64);
        }
    }
    Ok(out)
}

/// Loss suboptimality per iteration of SPAN, NewSamp and gradient descent
/// on a synthetic logistic problem, all started from the origin.
///
/// Layout: three consecutive blocks of `iterations` values (SPAN, NewSamp,
/// GD); a method that stops early repeats its last value.
pub fn convergence_traces(n: usize, d: usize, iterations: usize, seed: u64) -> Result<Vec<f64>, String> {
    if d < 12 || n < d || iterations == 0 {
        return Err("need d >= 12, n >= d and at least one iteration".into());
    }
    let data = normalize_rows(&synth_logistic(n, d, 0.8, seed).map_err(msg)?).0;
    let cfg = ObjectiveConfig::logistic(1e-3);
    let obj = Objective::new(&cfg, &data).map_err(msg)?;
    let x0 = vec![0.0; d];
    let batch = (n / 4).max(d);

    let reference = NewSampConfig {
        eta: 1.0,
        max_iter: 40,
        batch_size: n,
        m: d - 1,
        seed,
        grad_tol: 1e-12,
        probe_hessian_error: false,
    };
    let best = run_newsamp(&obj, &reference, &x0).map_err(msg)?.trace.iter().map(|r| r.loss).fold(f64::INFINITY, f64::min);

    let m = 6;
    let mut sc = SpanConfig::new(iterations, RangeConfig::new(m + 6, 2, m), batch, StepSize::Constant(0.8));
    sc.seed = seed;
    sc.hvp_mode = HvpMode::Analytic;
    sc.lambda_rule = LambdaRule::HalfSigmaNext;
    let span = run_span(&obj, &sc, &x0).map_err(msg)?;
    let ns = NewSampConfig {
        eta: 1.0,
        max_iter: iterations,
        batch_size: batch,
        m,
        seed,
        grad_tol: 0.0,
        probe_hessian_error: false,
    };
    let newsamp = run_newsamp(&obj, &ns, &x0).map_err(msg)?;
    let gd = run_gd(&obj, &GdConfig { eta: 4.0, max_iter: iterations, grad_tol: 0.0 }, &x0).map_err(msg)?;

    let mut out = Vec::with_capacity(3 * iterations);
    for run in [span, newsamp, gd] {
        let mut last = obj.full_loss(&x0).map_err(msg)?;
        for t in 0..iterations {
            if let Some(r) = run.trace.get(t) {
                last = r.loss;
            }
            out.push((last - best).max(0.0));
        }
    }
    Ok(out)
}

#[wasm_bindgen(js_name = powerProjection)]
pub fn power_projection_js(q: u32, samples: u32, seed: u32) -> Result<Vec<f64>, JsError> {
    power_projection(q as usize, samples as usize, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = hessianErrorGrid)]
pub fn hessian_error_grid_js(
    d: u32,
    decay: f64,
    m: u32,
    l_max: u32,
    q_max: u32,
    trials: u32,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    hessian_error_grid(d as usize, decay, m as usize, l_max as usize, q_max as usize, trials as usize, seed as u64)
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = convergenceTraces)]
pub fn convergence_traces_js(n: u32, d: u32, iterations: u32, seed: u32) -> Result<Vec<f64>, JsError> {
    convergence_traces(n as usize, d as usize, iterations as usize, seed as u64).map_err(|e| JsError::new(&e))
}
