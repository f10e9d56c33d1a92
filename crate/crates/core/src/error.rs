use thiserror::Error;

use crate::model::Regime;

/// Errors surfaced by every fallible operation in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MagError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("operation requires a supercritical regime, found {:?} (kappa = {kappa})", .regime.class)]
    RegimeViolation { regime: Regime, kappa: f64 },

    #[error("operation requires gamma0 != gamma1 (sigma = 0)")]
    DegenerateSigma,

    #[error("row length mismatch: {left} vs {right} attributes")]
    LengthMismatch { left: usize, right: usize },

    #[error("pair budget exceeded: {pairs} pairs requested, budget is {budget}")]
    BudgetExceeded { pairs: u128, budget: u128 },

    #[error("empty sample: {0}")]
    EmptySample(String),

    #[error("invalid config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, MagError>;

impl MagError {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        MagError::InvalidParameter(msg.into())
    }

    pub(crate) fn range(msg: impl Into<String>) -> Self {
        MagError::OutOfRange(msg.into())
    }
}
