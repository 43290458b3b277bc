//! Experiment runner for the SPAN optimizer and its baselines: config
//! parsing, start-point protocol, CSV traces, plot tables and the
//! per-iteration scaling report.

pub mod config;
pub mod experiment;
pub mod plot;
pub mod scaling;
pub mod traces;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{method} failed: {source}")]
    Method {
        method: String,
        #[source]
        source: span_core::Error,
    },
    #[error("incompatible traces: {0}")]
    IncompatibleTraces(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl BenchError {
    /// Process exit status: 1 for bad input, 2 for a failed method.
    /// Parameters a method rejects before iterating count as bad input.
    pub fn exit_code(&self) -> i32 {
        use span_core::Error as E;
        match self {
            Self::Method { source, .. } => match source {
                E::InvalidRankParams(_) | E::InvalidConfig(_) | E::BatchTooLarge { .. } | E::DimensionTooLarge { .. } => 1,
                _ => 2,
            },
            _ => 1,
        }
    }
}
