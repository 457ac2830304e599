use thiserror::Error;

/// Errors raised by the analysis pipeline.
///
/// Numeric payloads are reported as `f64` regardless of the scalar type the
/// computation ran in.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("resolvent of factor {factor} is singular or inaccurate at z={z}: {reason}")]
    SingularResolvent { factor: String, z: f64, reason: String },
    #[error("fixed-point iteration did not converge after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("Jacobian of the fixed-point system is singular at z={z}")]
    SingularJacobian { z: f64 },
    #[error("transience gate failed at z={z}: {reason}")]
    TransienceGateFailed { z: f64, reason: String },
    #[error("stationarity residual {residual:e} exceeds tolerance in {what}")]
    StationarityResidual { what: &'static str, residual: f64 },
    #[error("malformed word: {0}")]
    MalformedWord(String),
    #[error("denominator {value:e} too close to zero in {what}")]
    DivisionNearZero { what: &'static str, value: f64 },
    #[error("tail bound too loose: requested {requested:e}, achieved {achieved:e}")]
    TailBoundTooLoose { requested: f64, achieved: f64 },
    #[error("no root in bracket: {0}")]
    NoRoot(String),
    #[error("state space explosion: {reached} words reached (limit {limit})")]
    StateSpaceExplosion { reached: usize, limit: usize },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
