use thiserror::Error;

use crate::model::Violation;

/// Errors raised by the numerics, engines, oracle and agent runtime.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid probability vector: {0}")]
    InvalidProbVector(String),

    #[error("invalid Dirichlet block: {0}")]
    InvalidDirichlet(String),

    #[error("Dirichlet mode undefined: component {index} has concentration {value} <= 1")]
    ModeUndefined { index: usize, value: f64 },

    #[error("index {index} out of range for dimension {dimension}")]
    IndexOutOfRange { index: usize, dimension: usize },

    #[error("policy enumeration would produce {requested} policies (cap {cap})")]
    PolicyExplosion { requested: u128, cap: usize },

    #[error("c_const {c_const} must exceed every expected free energy; policy {policy} has G = {efe}")]
    ThetaNotPositive { c_const: f64, policy: usize, efe: f64 },

    #[error("zero normaliser in Bayes update")]
    ZeroEvidence,

    #[error("enumeration of {requested} joint states exceeds cap {cap}")]
    OracleTooLarge { requested: u128, cap: u128 },

    #[error("exact oracle requires frozen parameters; `{0}` is learned")]
    OracleNeedsFrozen(&'static str),

    #[error("horizon exhausted: t = {t} already reached T = {horizon}")]
    HorizonExhausted { t: usize, horizon: usize },

    #[error("model validation failed: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
