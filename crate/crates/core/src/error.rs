use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SncError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("unstable scenario: utilization {rho} >= 1")]
    Unstable { rho: f64 },

    #[error("trivial scenario: peak rate {peak} <= per-flow capacity {capacity}, delays are zero")]
    Trivial { peak: f64, capacity: f64 },

    #[error("GPS share is unstable: utilization {rho} >= 1")]
    GpsUnstable { rho: f64 },

    #[error("GPS share admits no feasible exponent (phi1*C <= n1*p*P)")]
    GpsInfeasible,

    #[error("generator is reducible or singular: {0}")]
    Reducible(String),

    #[error("modulating chain is not time-reversible (max violation {0:e})")]
    NotReversible(f64),

    #[error("source is unstable at allocated capacity {capacity}: mean rate {mean} >= capacity")]
    UnstableSource { mean: f64, capacity: f64 },

    #[error("source never exceeds allocated capacity {0}; no decay eigenproblem")]
    DegenerateSource(f64),

    #[error("zero-drift state persists after capacity perturbation")]
    ZeroDriftState,

    #[error("no positive generalized eigenvector found")]
    NoPositiveEigenvector,

    #[error("rate {c} outside the open interval (mean {mean}, peak {peak})")]
    OutOfRange { c: f64, mean: f64, peak: f64 },

    #[error("theta must be positive, got {0}")]
    NonPositiveTheta(f64),

    #[error("no capacity split satisfies both stability conditions")]
    NoFeasibleSplit,

    #[error("optimization failed: objective non-finite on the whole feasible set")]
    OptimizationFailure,

    #[error("unknown verification suite '{0}'")]
    UnknownSuite(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, SncError>;

impl From<std::io::Error> for SncError {
    fn from(e: std::io::Error) -> Self {
        SncError::Io(e.to_string())
    }
}

impl From<csv::Error> for SncError {
    fn from(e: csv::Error) -> Self {
        SncError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for SncError {
    fn from(e: serde_json::Error) -> Self {
        SncError::Io(e.to_string())
    }
}
