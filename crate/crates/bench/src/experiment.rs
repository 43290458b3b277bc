//! Builds the problem, applies the SVRG warm start and runs every requested
//! method from the same start point.

use std::hash::{Hash, Hasher};
use std::path::PathBuf;
use std::time::Instant;

use span_core::baselines::{run_gd, run_lissa, run_newsamp, run_svrg, SvrgConfig};
use span_core::datasets::{linear_spectrum, load_libsvm, normalize_rows, sample_features, synth_logistic, synth_quadratic, to_binary_dataset};
use span_core::linalg::gaussian_matrix;
use span_core::objectives::{Dataset, LossKind, Objective, ObjectiveConfig};
use span_core::span::run_span;
use span_core::OptimizerRun;

use crate::config::{DatasetKind, ExperimentConfig, StartPoint};
use crate::traces::save_trace;
use crate::BenchError;

const PREITERATE_SEED_SALT: u64 = 0x5772_6721;
const START_SEED_SALT: u64 = 0x57A7_0001;

/// An objective together with the data it owns.
#[derive(Clone, Debug)]
pub struct Problem {
    pub objective: ObjectiveConfig,
    pub data: Dataset,
}

impl Problem {
    pub fn objective(&self) -> Objective<'_> {
        Objective::new(&self.objective, &self.data).expect("validated when built")
    }
}

fn data_error(e: span_core::Error) -> BenchError {
    BenchError::Config(format!("dataset: {e}"))
}

pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem, BenchError> {
    let ds = &cfg.dataset;
    let seed = ds.seed.unwrap_or(cfg.experiment.seed);
    let kind = cfg.loss_kind()?;
    let data = match ds.kind {
        DatasetKind::Quadratic => {
            let spectrum = ds.spectrum.clone().unwrap_or_else(|| linear_spectrum(ds.dim.unwrap_or(0)));
            let (objective, data, _) = synth_quadratic(&spectrum).map_err(data_error)?;
            return Ok(Problem { objective, data });
        }
        DatasetKind::SyntheticLogistic => {
            let (n, d) = (ds.n.unwrap_or(0), ds.dim.unwrap_or(0));
            synth_logistic(n, d, ds.decay, seed).map_err(data_error)?
        }
        DatasetKind::Libsvm => {
            let path = ds.path.as_ref().expect("validated");
            let (examples, dim) = load_libsvm(path).map_err(data_error)?;
            let dim = ds.dim.unwrap_or(dim);
            to_binary_dataset(&examples, ds.positive_label, ds.negative_label, dim).map_err(data_error)?
        }
    };
    let data = match ds.sample_features {
        Some(k) if k < data.dim() => {
            let sample = sample_features(&data, k, seed).map_err(data_error)?;
            log::info!(
                "kept {k} of {} features after {} draw(s), {} zero rows",
                data.dim(),
                sample.attempts,
                sample.zero_rows
            );
            sample.dataset
        }
        _ => data,
    };
    let data = if ds.normalize {
        let (normalized, zero_rows) = normalize_rows(&data);
        if zero_rows > 0 {
            log::warn!("{zero_rows} all-zero rows left unnormalized");
        }
        normalized
    } else {
        data
    };
    let objective = match kind {
        LossKind::Logistic => ObjectiveConfig::logistic(cfg.objective.reg_a),
        LossKind::HuberSvm => ObjectiveConfig::huber_svm(cfg.objective.reg_a),
        LossKind::Quadratic => unreachable!("quadratic datasets return early"),
    };
    objective.validate().map_err(data_error)?;
    Ok(Problem { objective, data })
}

/// The configured base point followed by `preiterate_svrg_epochs` epochs of
/// SVRG.
pub fn start_point(cfg: &ExperimentConfig, problem: &Problem) -> Result<Vec<f64>, BenchError> {
    let obj = problem.objective();
    let x0 = match cfg.experiment.start {
        StartPoint::Zeros => vec![0.0; obj.dim()],
        StartPoint::Gaussian => gaussian_matrix(obj.dim(), 1, cfg.experiment.seed ^ START_SEED_SALT).into_data(),
    };
    let epochs = cfg.experiment.preiterate_svrg_epochs;
    if epochs == 0 {
        return Ok(x0);
    }
    let svrg = SvrgConfig {
        eta: cfg.experiment.preiterate_eta,
        epochs,
        inner_steps: None,
        batch_size: cfg.experiment.preiterate_batch.min(obj.n_samples()),
        seed: cfg.experiment.seed ^ PREITERATE_SEED_SALT,
        grad_tol: 0.0,
    };
    run_svrg(&obj, &svrg, &x0)
        .map(|run| run.x)
        .map_err(|source| BenchError::Method {
            method: "svrg warm start".into(),
            source,
        })
}

pub fn run_method(
    name: &str,
    cfg: &ExperimentConfig,
    obj: &Objective<'_>,
    x0: &[f64],
) -> Result<OptimizerRun, BenchError> {
    let n = obj.n_samples();
    let result = match name {
        "span" => run_span(obj, &cfg.span_config(n)?, x0),
        "gd" => run_gd(obj, &cfg.gd_config(), x0),
        "svrg" => run_svrg(obj, &cfg.svrg_config(), x0),
        "newsamp" => run_newsamp(obj, &cfg.newsamp_config(n), x0),
        "lissa" => run_lissa(obj, &cfg.lissa_config(), x0),
        other => return Err(BenchError::Config(format!("unknown method {other:?}"))),
    };
    result.map_err(|source| BenchError::Method {
        method: name.to_owned(),
        source,
    })
}

#[derive(Debug)]
pub struct MethodOutcome {
    pub method: String,
    pub result: Result<OptimizerRun, BenchError>,
    pub seconds: f64,
    pub csv: Option<PathBuf>,
}

#[derive(Debug)]
pub struct ExperimentReport {
    pub x0: Vec<f64>,
    pub outcomes: Vec<MethodOutcome>,
    pub summary: PathBuf,
}

impl ExperimentReport {
    pub fn all_succeeded(&self) -> bool {
        self.outcomes.iter().all(|o| o.result.is_ok())
    }

    pub fn first_failure(&self) -> Option<&BenchError> {
        self.outcomes.iter().find_map(|o| o.result.as_ref().err())
    }
}

/// Stable digest of the exact bits of a start point.
pub fn fingerprint(x: &[f64]) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for v in x {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Runs every method sequentially, writing `<method>.csv` per success and
/// `summary.csv` for all. Method failures are recorded, not propagated.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, BenchError> {
    let out = &cfg.experiment.output_dir;
    std::fs::create_dir_all(out)
        .map_err(|e| BenchError::Config(format!("output_dir {}: {e}", out.display())))?;
    let problem = build_problem(cfg)?;
    let obj = problem.objective();
    let x0 = start_point(cfg, &problem)?;
    let digest = fingerprint(&x0);

    let mut outcomes = Vec::new();
    for method in &cfg.experiment.methods {
        let launch = x0.clone();
        assert_eq!(fingerprint(&launch), digest, "start point drifted between methods");
        let started = Instant::now();
        let result = run_method(method, cfg, &obj, &launch);
        let seconds = started.elapsed().as_secs_f64();
        let csv = match &result {
            Ok(run) => {
                let path = out.join(format!("{method}.csv"));
                save_trace(&path, &run.trace)?;
                Some(path)
            }
            Err(e) => {
                log::error!("{e}");
                None
            }
        };
        outcomes.push(MethodOutcome {
            method: method.clone(),
            result,
            seconds,
            csv,
        });
    }

    let summary = out.join("summary.csv");
    write_summary(&summary, &outcomes, digest)?;
    Ok(ExperimentReport { x0, outcomes, summary })
}

fn write_summary(path: &PathBuf, outcomes: &[MethodOutcome], digest: u64) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "status", "iterations", "final_loss", "final_grad_norm", "total_seconds", "x0_fingerprint"])?;
    for o in outcomes {
        let fp = format!("{digest:016x}");
        let secs = o.seconds.to_string();
        match &o.result {
            Ok(run) => {
                let last = run.trace.last();
                let loss = last.map(|r| r.loss.to_string()).unwrap_or_default();
                let grad = last.map(|r| r.grad_norm.to_string()).unwrap_or_default();
                let iters = run.trace.len().to_string();
                w.write_record([o.method.as_str(), "ok", &iters, &loss, &grad, &secs, &fp])?;
            }
            Err(e) => {
                let status = format!("error: {e}");
                w.write_record([o.method.as_str(), &status, "", "", "", &secs, &fp])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
