use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// The compressible white-noise limit without an ultraviolet cutoff needs
    /// a limiting Hurst exponent above 1/2.
    #[error(
        "compressible limit with ell1 = 0 is ill-posed: alpha + beta = {sum} must exceed 3/2"
    )]
    IllPosedCompressibleLimit { sum: f64 },

    #[error("quadrature did not reach tolerance {tolerance:e} (error estimate {estimate:e})")]
    Quadrature { tolerance: f64, estimate: f64 },

    #[error("time step {dt} too large: displacement per step {step_length} exceeds {limit}")]
    StepSize {
        dt: f64,
        step_length: f64,
        limit: f64,
    },

    #[error("quadrature grid does not cover the support of the test function")]
    GridCoverage,

    #[error("invalid observable: {0}")]
    InvalidObservable(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("schedule violates condition {condition}: {expression} = {value}")]
    ScheduleViolation {
        condition: String,
        expression: String,
        value: f64,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 configuration, 3 schedule violation, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ScheduleViolation { .. } => 3,
            Error::Quadrature { .. } | Error::StepSize { .. } | Error::GridCoverage | Error::Numerical(_) => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
