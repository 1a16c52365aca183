use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("series has {n_time} column(s); at least 2 are needed to form a snapshot pair")]
    SeriesTooShort { n_time: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("split of {m_train} training + {m_test} test columns exceeds series length {n_time}")]
    SplitOutOfRange {
        m_train: usize,
        m_test: usize,
        n_time: usize,
    },

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("CFL number {cfl} exceeds 1")]
    CflViolated { cfl: f64 },

    #[error("diffusion number {number} exceeds 0.5")]
    StabilityViolated { number: f64 },

    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },

    #[error("singular value decomposition did not converge")]
    SvdFailure,

    #[error("eigendecomposition did not converge")]
    EigFailure,

    #[error("backtracking step fell below {min_step:e}")]
    StepUnderflow { min_step: f64 },

    #[error("operator diverged at update {step}: max |entry| = {max_abs:e}")]
    Diverged { step: usize, max_abs: f64 },

    #[error("recursive least-squares gain is not finite at update {step}")]
    IllConditioned { step: usize },

    #[error("rank {rank} requested but sigma_{rank} / sigma_1 = {ratio:e} is below the cutoff")]
    RankDeficient { rank: usize, ratio: f64 },

    #[error("normal matrix is singular (lambda = 0 with rank-deficient data)")]
    Singular,

    #[error("truth has zero variance; R^2 is undefined")]
    DegenerateTruth,
}

impl Error {
    pub(crate) fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            got: got.into(),
        }
    }
}
