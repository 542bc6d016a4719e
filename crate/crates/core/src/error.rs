use thiserror::Error;

use crate::model::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular system in {0}")]
    Singular(&'static str),

    #[error("overflow while computing {0}")]
    Overflow(&'static str),

    #[error("integral diverges: {0}")]
    Divergent(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("tau = {tau} is outside the admissible interval (0, {tau_star})")]
    TauOutOfRange { tau: f64, tau_star: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid model: {}", format_violations(.0))]
    InvalidModel(Vec<Violation>),

    #[error("no convergence in {0}")]
    NoConvergence(&'static str),

    #[error("model file schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
