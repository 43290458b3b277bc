//! Empirical per-iteration cost of SPAN and NewSamp on synthetic quadratics.

use std::io::Write;

use span_core::baselines::{run_newsamp, NewSampConfig};
use span_core::datasets::{linear_spectrum, synth_quadratic};
use span_core::linalg::gaussian_matrix;
use span_core::rangefinder::RangeConfig;
use span_core::span::{run_span, SpanConfig, StepSize};
use span_core::TraceRecord;

use crate::BenchError;

/// Small enough that iterates stay far from subnormal range however many
/// steps are timed; the step length does not affect cost.
const TIMING_ETA: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct ScalingSettings {
    pub l: usize,
    pub q: usize,
    pub m: usize,
    pub newsamp_m: usize,
    pub steps: usize,
    pub warmup: usize,
    pub newsamp_cap: usize,
    pub min_seconds: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRow {
    pub d: usize,
    pub l: usize,
    pub span_step_s: f64,
    pub newsamp_step_s: Option<f64>,
}

fn method_error(method: &str) -> impl Fn(span_core::Error) -> BenchError + '_ {
    move |source| BenchError::Method {
        method: method.to_owned(),
        source,
    }
}

/// Mean seconds per step after `warmup`, doubling the timed step count until
/// at least `min_seconds` have been measured.
fn time_steps(
    s: &ScalingSettings,
    mut run: impl FnMut(usize) -> Result<Vec<TraceRecord>, BenchError>,
) -> Result<f64, BenchError> {
    let mut steps = s.steps.max(1);
    loop {
        let trace = run(s.warmup + steps)?;
        if trace.len() < s.warmup + steps {
            return Err(BenchError::Config(format!(
                "run stopped after {} of {} steps",
                trace.len(),
                s.warmup + steps
            )));
        }
        let start = if s.warmup == 0 { 0.0 } else { trace[s.warmup - 1].wall_clock_s };
        let spent = trace.last().expect("nonempty").wall_clock_s - start;
        if spent >= s.min_seconds || steps >= 1 << 20 {
            return Ok(spent / steps as f64);
        }
        steps *= 2;
    }
}

pub fn span_step_seconds(d: usize, l: usize, s: &ScalingSettings) -> Result<f64, BenchError> {
    let (cfg, data, _) = synth_quadratic(&linear_spectrum(d)).map_err(method_error("span"))?;
    let obj = span_core::objectives::Objective::new(&cfg, &data).map_err(method_error("span"))?;
    let x0 = gaussian_matrix(d, 1, s.seed).into_data();
    time_steps(s, |steps| {
        let mut sc = SpanConfig::new(steps, RangeConfig::new(l, s.q, s.m), 1, StepSize::Constant(TIMING_ETA));
        sc.seed = s.seed;
        run_span(&obj, &sc, &x0).map(|r| r.trace).map_err(method_error("span"))
    })
}

pub fn newsamp_step_seconds(d: usize, s: &ScalingSettings) -> Result<f64, BenchError> {
    let (cfg, data, _) = synth_quadratic(&linear_spectrum(d)).map_err(method_error("newsamp"))?;
    let obj = span_core::objectives::Objective::new(&cfg, &data).map_err(method_error("newsamp"))?;
    let x0 = gaussian_matrix(d, 1, s.seed).into_data();
    time_steps(s, |steps| {
        let nc = NewSampConfig {
            eta: TIMING_ETA,
            max_iter: steps,
            batch_size: 1,
            m: s.newsamp_m,
            seed: s.seed,
            grad_tol: 0.0,
            probe_hessian_error: false,
        };
        run_newsamp(&obj, &nc, &x0).map(|r| r.trace).map_err(method_error("newsamp"))
    })
}

/// One row per `d`; NewSamp is skipped above `newsamp_cap`.
pub fn per_iteration_scaling(dims: &[usize], s: &ScalingSettings) -> Result<Vec<ScalingRow>, BenchError> {
    dims.iter()
        .map(|&d| {
            let span = span_step_seconds(d, s.l, s)?;
            let newsamp = if d <= s.newsamp_cap {
                Some(newsamp_step_seconds(d, s)?)
            } else {
                None
            };
            Ok(ScalingRow {
                d,
                l: s.l,
                span_step_s: span,
                newsamp_step_s: newsamp,
            })
        })
        .collect()
}

/// SPAN only, varying the sketch width at fixed `d`.
pub fn width_scaling(d: usize, widths: &[usize], s: &ScalingSettings) -> Result<Vec<ScalingRow>, BenchError> {
    widths
        .iter()
        .map(|&l| {
            Ok(ScalingRow {
                d,
                l,
                span_step_s: span_step_seconds(d, l, s)?,
                newsamp_step_s: None,
            })
        })
        .collect()
}

pub fn write_rows<W: Write>(rows: &[ScalingRow], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["d", "l", "span_step_s", "newsamp_step_s"])?;
    for r in rows {
        w.write_record([
            r.d.to_string(),
            r.l.to_string(),
            r.span_step_s.to_string(),
            r.newsamp_step_s.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> ScalingSettings {
        ScalingSettings {
            l: 8,
            q: 1,
            m: 4,
            newsamp_m: 4,
            steps: 3,
            warmup: 1,
            newsamp_cap: 40,
            min_seconds: 0.0,
            seed: 1,
        }
    }

    #[test]
    fn rows_respect_the_newsamp_cap() {
        let rows = per_iteration_scaling(&[20, 60], &quick()).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].newsamp_step_s.is_some());
        assert!(rows[1].newsamp_step_s.is_none());
        assert!(rows.iter().all(|r| r.span_step_s > 0.0));
        let mut buf = Vec::new();
        write_rows(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("d,l,span_step_s,newsamp_step_s\n20,8,"));
        assert!(text.lines().nth(2).unwrap().ends_with(','));
    }
}
