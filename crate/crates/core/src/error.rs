use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimension {dim} exceeds the dense cap of {cap}")]
    DimensionTooLarge { dim: usize, cap: usize },

    #[error("columns are numerically dependent (pivot ratio {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("iteration did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("linear system is singular or ill-conditioned (pivot ratio {ratio:e})")]
    SingularSystem { ratio: f64 },

    #[error("batch size {b} is outside 1..={n}")]
    BatchTooLarge { b: usize, n: usize },

    #[error("non-finite value produced during {0}")]
    NonFiniteResult(&'static str),

    #[error("invalid rank parameters: {0}")]
    InvalidRankParams(String),

    #[error("captured curvature block is not positive definite (smallest eigenvalue {min_eig:e})")]
    IndefiniteBlock { min_eig: f64 },

    #[error("Neumann series diverged (iterate norm {norm:e})")]
    DivergingSeries { norm: f64 },

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("no examples carry either of the requested labels")]
    NoMatchingExamples,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
