//! Stochastic projected approximate Newton (SPAN) for regularized
//! finite-sum minimization.
//!
//! The optimizer never forms a Hessian. Each step sketches the batch
//! Hessian's dominant range with Gaussian test vectors pushed through
//! Hessian-vector products, then inverts a low-rank-plus-shift surrogate:
//!
//! ```
//! use span_core::prelude::*;
//!
//! let (cfg, data, _) = synth_quadratic(&linear_spectrum(20)).unwrap();
//! let obj = Objective::new(&cfg, &data).unwrap();
//! let span = SpanConfig::new(30, RangeConfig::new(8, 1, 4), 1, StepSize::Constant(0.5));
//! let run = run_span(&obj, &span, &vec![1.0; 20]).unwrap();
//! assert!(run.trace.last().unwrap().loss < 1e-6);
//! ```
//!
//! Gradient descent, SVRG, NewSamp and LiSSA are provided in [`baselines`]
//! with the same [`TraceRecord`] output.

pub mod baselines;
pub mod datasets;
pub mod error;
pub mod hvp;
pub mod linalg;
pub mod objectives;
pub mod rangefinder;
pub mod span;
pub mod trace;

pub use error::{Error, Result};
pub use trace::{OptimizerRun, TraceRecord};

pub mod prelude {
    pub use crate::baselines::{
        run_gd, run_lissa, run_newsamp, run_svrg, GdConfig, LissaConfig, NewSampConfig, SvrgConfig,
    };
    pub use crate::datasets::{linear_spectrum, normalize_rows, synth_logistic, synth_quadratic};
    pub use crate::hvp::HvpMode;
    pub use crate::linalg::DenseMatrix;
    pub use crate::objectives::{Batch, Dataset, LossKind, Objective, ObjectiveConfig};
    pub use crate::rangefinder::{min_power_iterations, RangeConfig};
    pub use crate::span::{build_subspace, run_span, LambdaRule, SpanConfig, StepSize, Subspace};
    pub use crate::trace::{OptimizerRun, TraceRecord};
}
