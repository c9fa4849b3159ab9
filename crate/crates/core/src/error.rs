use thiserror::Error;

/// Errors raised by the solvers and the run harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("Sobolev index m={0} outside supported range 0..=8")]
    SobolevRange(u32),

    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("eigensolver did not converge for mode {mode} after {iterations} iterations")]
    NoConvergence { mode: usize, iterations: usize },

    #[error("eigenbasis invariant violated: {0}")]
    Invariant(String),

    #[error("degenerate eigenvalues at p={p}: gap {gap:e} below guard")]
    Degenerate { p: usize, gap: f64 },

    #[error("memory budget exceeded: requires {required} points, cap is {available}")]
    MemoryBudget { required: usize, available: usize },

    #[error("mode truncation tail {tail:e} exceeds threshold {threshold:e}; increase the mode count")]
    TailTooLarge { tail: f64, threshold: f64 },

    #[error("negative effective-mass coefficient alpha_{p} = {value}; pass the override flag to run anyway")]
    NegativeAlpha { p: usize, value: f64 },

    #[error("NaN detected at step {step}")]
    NanAtStep { step: usize },

    #[error("z-shift {shift} exceeds box margin {margin} at xi = {xi}")]
    ShiftOutOfBox { xi: f64, shift: f64, margin: f64 },

    #[error("eigensolve failed at xi = {xi}: {source}")]
    ShiftedSolve {
        xi: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("time grids do not match: {0}")]
    TimeMismatch(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("usage: {0}")]
    Usage(String),

    #[error("container format: {0}")]
    Format(String),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
