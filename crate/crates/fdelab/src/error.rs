use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("time t={t} is not before the extinction time T={big_t}")]
    PastExtinction { t: f64, big_t: f64 },

    #[error("newton did not converge at s={s} after {retries} step halvings (last ds={ds:e}, update {update:e})")]
    NewtonFailed {
        s: f64,
        ds: f64,
        retries: u32,
        update: f64,
    },

    #[error("sandwich bound violated by {excess:e} at r={r} (s={s})")]
    SandwichViolation { s: f64, r: f64, excess: f64 },

    #[error("eigensolver failed for eigenvalue {index}: {reason} after {iterations} iterations")]
    Eigen {
        index: usize,
        iterations: usize,
        reason: String,
    },

    #[error("cannot fit {model} model: {reason}")]
    Fit { model: &'static str, reason: String },

    #[error("no trials satisfy ratio constraint (c0 = {c0})")]
    NoAdmissibleTrials { c0: f64 },

    #[error("degenerate constant: {0}")]
    DegenerateConstant(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("singular tridiagonal system at row {row}")]
    Singular { row: usize },
}
