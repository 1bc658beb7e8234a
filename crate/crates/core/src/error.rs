use thiserror::Error;

use crate::abstraction::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("integration diverged at t = {time}")]
    Divergence { time: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty grid on axis {axis}: no multiple of {step} in [{lower}, {upper}]")]
    EmptyGrid { axis: usize, step: f64, lower: f64, upper: f64 },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("system matrix is not Hurwitz (max real part of spectrum = {max_real_part})")]
    NotHurwitz { max_real_part: f64 },

    #[error("sampling periods differ: {0} vs {1}")]
    TauMismatch(f64, f64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("precision parameters rejected: {}", format_violations(.0))]
    InvalidParameters(Vec<Violation>),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("malformed transition system: {0}")]
    Malformed(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}
