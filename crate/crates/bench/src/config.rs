//! Experiment configuration.
//!
//! Files are TOML, normally written as flat dotted keys:
//!
//! ```text
//! dataset.kind = "synthetic_logistic"
//! dataset.n = 2000
//! objective.reg_a = 1e-3
//! experiment.methods = ["span", "newsamp"]
//! span.l = 16
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;
use span_core::baselines::{GdConfig, LissaConfig, NewSampConfig, SvrgConfig};
use span_core::hvp::HvpMode;
use span_core::objectives::LossKind;
use span_core::rangefinder::RangeConfig;
use span_core::span::{LambdaRule, SpanConfig, StepSize};

use crate::BenchError;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub objective: ObjectiveSpec,
    pub experiment: ExperimentSpec,
    #[serde(default)]
    pub span: SpanSpec,
    #[serde(default)]
    pub gd: GdSpec,
    #[serde(default)]
    pub svrg: SvrgSpec,
    #[serde(default)]
    pub newsamp: NewSampSpec,
    #[serde(default)]
    pub lissa: LissaSpec,
    #[serde(default)]
    pub scale: ScaleSpec,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    SyntheticLogistic,
    Libsvm,
    Quadratic,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    /// LIBSVM file, `.gz` accepted.
    pub path: Option<PathBuf>,
    #[serde(default = "default_positive")]
    pub positive_label: f64,
    #[serde(default = "default_negative")]
    pub negative_label: f64,
    #[serde(default = "default_true")]
    pub normalize: bool,
    /// Keep this many uniformly sampled feature columns.
    pub sample_features: Option<usize>,
    pub n: Option<usize>,
    pub dim: Option<usize>,
    #[serde(default = "default_decay")]
    pub decay: f64,
    pub seed: Option<u64>,
    /// Explicit quadratic spectrum; otherwise `1 + (d − i)/5`.
    pub spectrum: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    #[serde(default = "default_loss")]
    pub loss: String,
    #[serde(default = "default_reg")]
    pub reg_a: f64,
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        Self {
            loss: default_loss(),
            reg_a: default_reg(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub methods: Vec<String>,
    #[serde(default = "default_preiterate")]
    pub preiterate_svrg_epochs: usize,
    #[serde(default = "default_preiterate_eta")]
    pub preiterate_eta: f64,
    #[serde(default = "default_one")]
    pub preiterate_batch: usize,
    #[serde(default)]
    pub start: StartPoint,
    #[serde(default)]
    pub probe_hessian_error: bool,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

/// Point the warm start begins from.
#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum StartPoint {
    #[default]
    Zeros,
    /// Seeded standard normal entries.
    Gaussian,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpanSpec {
    pub max_iter: usize,
    pub l: usize,
    pub q: usize,
    pub m: usize,
    /// Defaults to the full dataset.
    pub batch_size: Option<usize>,
    /// A number, a list of numbers, or `"auto"`.
    pub eta: toml::Value,
    pub grad_tol: f64,
    pub hvp: String,
    pub lambda_rule: String,
    pub reorthonormalize: Option<bool>,
}

impl Default for SpanSpec {
    fn default() -> Self {
        Self {
            max_iter: 50,
            l: 16,
            q: 1,
            m: 10,
            batch_size: None,
            eta: toml::Value::Float(1.0),
            grad_tol: 0.0,
            hvp: "finite_difference".into(),
            lambda_rule: "safeguard".into(),
            reorthonormalize: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GdSpec {
    pub eta: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for GdSpec {
    fn default() -> Self {
        Self {
            eta: 1.0,
            max_iter: 100,
            grad_tol: 0.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvrgSpec {
    pub eta: f64,
    pub epochs: usize,
    pub inner_steps: Option<usize>,
    pub batch_size: usize,
    pub grad_tol: f64,
}

impl Default for SvrgSpec {
    fn default() -> Self {
        Self {
            eta: 0.5,
            epochs: 30,
            inner_steps: None,
            batch_size: 1,
            grad_tol: 0.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewSampSpec {
    pub eta: f64,
    pub max_iter: usize,
    pub batch_size: Option<usize>,
    pub m: usize,
    pub grad_tol: f64,
}

impl Default for NewSampSpec {
    fn default() -> Self {
        Self {
            eta: 1.0,
            max_iter: 50,
            batch_size: None,
            m: 10,
            grad_tol: 0.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LissaSpec {
    pub eta: f64,
    pub max_iter: usize,
    pub batch_size: usize,
    pub inner_steps: usize,
    pub s1: usize,
    pub grad_tol: f64,
}

impl Default for LissaSpec {
    fn default() -> Self {
        Self {
            eta: 1.0,
            max_iter: 50,
            batch_size: 1,
            inner_steps: 100,
            s1: 1,
            grad_tol: 0.0,
        }
    }
}

/// Settings for `bench scale`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScaleSpec {
    pub dims: Vec<usize>,
    pub steps: usize,
    pub warmup: usize,
    pub newsamp_cap: usize,
    /// Keep timing beyond `steps` until this much time has been spent.
    pub min_seconds: f64,
}

impl Default for ScaleSpec {
    fn default() -> Self {
        Self {
            dims: vec![100, 400, 1600],
            steps: 20,
            warmup: 3,
            newsamp_cap: 400,
            min_seconds: 0.2,
        }
    }
}

fn default_positive() -> f64 {
    4.0
}
fn default_negative() -> f64 {
    9.0
}
fn default_true() -> bool {
    true
}
fn default_decay() -> f64 {
    0.8
}
fn default_loss() -> String {
    "logistic".into()
}
fn default_reg() -> f64 {
    1e-3
}
fn default_preiterate() -> usize {
    2
}
fn default_preiterate_eta() -> f64 {
    0.5
}
fn default_one() -> usize {
    1
}
fn default_output() -> PathBuf {
    PathBuf::from("bench_out")
}

pub const METHODS: [&str; 5] = ["span", "gd", "svrg", "newsamp", "lissa"];

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let cfg: Self = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BenchError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.experiment.methods.is_empty() {
            return Err(BenchError::Config("experiment.methods is empty".into()));
        }
        for m in &self.experiment.methods {
            if !METHODS.contains(&m.as_str()) {
                return Err(BenchError::Config(format!("unknown method {m:?}")));
            }
        }
        self.loss_kind()?;
        match self.dataset.kind {
            DatasetKind::Libsvm if self.dataset.path.is_none() => {
                return Err(BenchError::Config("dataset.path is required for libsvm".into()))
            }
            DatasetKind::SyntheticLogistic if self.dataset.n.is_none() || self.dataset.dim.is_none() => {
                return Err(BenchError::Config("synthetic datasets need dataset.n and dataset.dim".into()))
            }
            DatasetKind::Quadratic if self.dataset.spectrum.is_none() && self.dataset.dim.is_none() => {
                return Err(BenchError::Config("quadratic datasets need dataset.spectrum or dataset.dim".into()))
            }
            _ => {}
        }
        self.step_size()?;
        self.hvp_mode()?;
        self.lambda_rule()?;
        Ok(())
    }

    pub fn loss_kind(&self) -> Result<LossKind, BenchError> {
        if self.dataset.kind == DatasetKind::Quadratic {
            return Ok(LossKind::Quadratic);
        }
        LossKind::from_str(&self.objective.loss).map_err(|e| BenchError::Config(e.to_string()))
    }

    pub fn step_size(&self) -> Result<StepSize, BenchError> {
        let bad = || BenchError::Config(format!("span.eta must be a number, a list or \"auto\", got {}", self.span.eta));
        match &self.span.eta {
            toml::Value::Float(v) => Ok(StepSize::Constant(*v)),
            toml::Value::Integer(v) => Ok(StepSize::Constant(*v as f64)),
            toml::Value::String(s) if s == "auto" => Ok(StepSize::Auto),
            toml::Value::Array(items) => items
                .iter()
                .map(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)).ok_or_else(bad))
                .collect::<Result<Vec<_>, _>>()
                .map(StepSize::Schedule),
            _ => Err(bad()),
        }
    }

    pub fn hvp_mode(&self) -> Result<HvpMode, BenchError> {
        HvpMode::from_str(&self.span.hvp).map_err(|e| BenchError::Config(e.to_string()))
    }

    pub fn lambda_rule(&self) -> Result<LambdaRule, BenchError> {
        LambdaRule::from_str(&self.span.lambda_rule).map_err(|e| BenchError::Config(e.to_string()))
    }

    /// Method configurations resolved against a dataset of `n` samples.
    pub fn span_config(&self, n: usize) -> Result<SpanConfig, BenchError> {
        let s = &self.span;
        let mut range = RangeConfig::new(s.l, s.q, s.m);
        if let Some(r) = s.reorthonormalize {
            range.reorthonormalize = r;
        }
        let mut cfg = SpanConfig::new(s.max_iter, range, s.batch_size.unwrap_or(n), self.step_size()?);
        cfg.seed = self.experiment.seed;
        cfg.grad_tol = s.grad_tol;
        cfg.hvp_mode = self.hvp_mode()?;
        cfg.lambda_rule = self.lambda_rule()?;
        cfg.probe_hessian_error = self.experiment.probe_hessian_error;
        Ok(cfg)
    }

    pub fn gd_config(&self) -> GdConfig {
        GdConfig {
            eta: self.gd.eta,
            max_iter: self.gd.max_iter,
            grad_tol: self.gd.grad_tol,
        }
    }

    pub fn svrg_config(&self) -> SvrgConfig {
        SvrgConfig {
            eta: self.svrg.eta,
            epochs: self.svrg.epochs,
            inner_steps: self.svrg.inner_steps,
            batch_size: self.svrg.batch_size,
            seed: self.experiment.seed,
            grad_tol: self.svrg.grad_tol,
        }
    }

    pub fn newsamp_config(&self, n: usize) -> NewSampConfig {
        NewSampConfig {
            eta: self.newsamp.eta,
            max_iter: self.newsamp.max_iter,
            batch_size: self.newsamp.batch_size.unwrap_or(n),
            m: self.newsamp.m,
            seed: self.experiment.seed,
            grad_tol: self.newsamp.grad_tol,
            probe_hessian_error: self.experiment.probe_hessian_error,
        }
    }

    pub fn lissa_config(&self) -> LissaConfig {
        LissaConfig {
            eta: self.lissa.eta,
            max_iter: self.lissa.max_iter,
            batch_size: self.lissa.batch_size,
            inner_steps: self.lissa.inner_steps,
            s1: self.lissa.s1,
            seed: self.experiment.seed,
            grad_tol: self.lissa.grad_tol,
            probe_hessian_error: self.experiment.probe_hessian_error,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
dataset.kind = "quadratic"
dataset.dim = 20
experiment.methods = ["span", "gd"]
span.l = 8
span.m = 4
"#;

    #[test]
    fn dotted_keys_parse_with_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.span.l, 8);
        assert_eq!(cfg.span.q, 1);
        assert_eq!(cfg.experiment.preiterate_svrg_epochs, 2);
        assert_eq!(cfg.loss_kind().unwrap(), LossKind::Quadratic);
        assert_eq!(cfg.step_size().unwrap(), StepSize::Constant(1.0));
    }

    #[test]
    fn step_size_forms() {
        let with = |eta: &str| ExperimentConfig::from_toml(&format!("{MINIMAL}span.eta = {eta}\n"));
        assert_eq!(with("1").unwrap().step_size().unwrap(), StepSize::Constant(1.0));
        assert_eq!(with("\"auto\"").unwrap().step_size().unwrap(), StepSize::Auto);
        assert_eq!(with("[0.5, 1.0]").unwrap().step_size().unwrap(), StepSize::Schedule(vec![0.5, 1.0]));
        assert!(matches!(with("\"fast\""), Err(BenchError::Config(_))));
    }

    #[test]
    fn rejects_bad_configs() {
        let cases = [
            "dataset.kind = \"quadratic\"\ndataset.dim = 5\nexperiment.methods = []\n",
            "dataset.kind = \"quadratic\"\ndataset.dim = 5\nexperiment.methods = [\"bfgs\"]\n",
            "dataset.kind = \"libsvm\"\nexperiment.methods = [\"gd\"]\n",
            "dataset.kind = \"quadratic\"\ndataset.dim = 5\nexperiment.methods = [\"gd\"]\nspan.lx = 3\n",
            "dataset.kind = \"quadratic\"\n",
        ];
        for c in cases {
            assert!(matches!(ExperimentConfig::from_toml(c), Err(BenchError::Config(_))), "{c}");
        }
    }
}
