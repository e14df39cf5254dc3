use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("metric is not positive definite at t = {t}, x = {x:?}")]
    SingularMetric { t: f64, x: Vec<f64> },
    #[error("point is not on the boundary (b = {level:e})")]
    NotOnBoundary { level: f64 },
    #[error("vector is not tangential to the boundary (<v,N> = {inner:e})")]
    NotTangential { inner: f64 },
    #[error("geodesic shooting did not converge (endpoint miss {miss:e} after {iterations} iterations)")]
    ShootingNoConvergence { miss: f64, iterations: usize },
    #[error("points coincide (rho = {rho:e}); mirror map is the identity")]
    DegeneratePair { rho: f64 },
    #[error("conformal factor drops below 1 (min value {value})")]
    PhiBelowOne { value: f64 },
    #[error("path left the chart at t = {t}, x = {x:?}")]
    LeftChart { t: f64, x: Vec<f64> },
    #[error("time {t} reaches the horizon {horizon}")]
    HorizonExceeded { t: f64, horizon: f64 },
    #[error("projection onto the boundary diverged (b = {level:e})")]
    ProjectionDiverged { level: f64 },
    #[error("oracle failure: {0}")]
    OracleFailure(String),
    #[error("nested Monte-Carlo cost {requested} exceeds the cap {cap}")]
    NestedBudgetExceeded { requested: u64, cap: u64 },
    #[error("coupling stalled at t = {t}: {reason}")]
    CouplingStalled { t: f64, reason: String },
    #[error("theta = {0} is outside (0, 2)")]
    ThetaOutOfRange(f64),
    #[error("Girsanov log-density overflow (|log R| = {log_r:e})")]
    LedgerOverflow { log_r: f64 },
    #[error("p = {p} does not exceed the required minimum {min}")]
    PConstraintViolated { p: f64, min: f64 },
    #[error("conformal factor not admissible: II + N log phi = {excess:e} < 0 at a boundary probe")]
    PhiNotInD { excess: f64 },
    #[error("r0 = {r0} exceeds the admissible radius {max}")]
    R0TooLarge { r0: f64, max: f64 },
    #[error("extrapolation unstable: {0}")]
    ExtrapolationUnstable(String),
    #[error("{failed} of {total} paths failed (first error: {first})")]
    TooManyPathFailures { failed: usize, total: usize, first: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
