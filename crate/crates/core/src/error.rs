use thiserror::Error;

/// Errors produced by the plate simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: String,
    },

    #[error("derivative of order {order} is not supported (maximum is 4)")]
    UnsupportedOrder { order: usize },

    #[error("grid of {n1}x{n2} nodes is too small for a stencil of reach {reach}")]
    GridSize { n1: usize, n2: usize, reach: usize },

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("boundary configuration error: {0}")]
    Config(String),

    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("simulation diverged at step {step} (t = {t})")]
    Divergence { step: usize, t: f64 },

    #[error("{0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check(cond: bool, name: &'static str, value: f64, reason: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: reason.to_string(),
        })
    }
}
