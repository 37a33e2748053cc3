use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-positive density {value:e} in cell {cell}")]
    NonPositiveDensity { cell: usize, value: f64 },

    #[error("non-positive dual density {value:e} on face {face} (direction {dir})")]
    NonPositiveDualDensity { dir: usize, face: usize, value: f64 },

    #[error("elliptic solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("right-hand side incompatible with singular operator (defect {defect:e})")]
    IncompatibleRhs { defect: f64 },

    #[error("time-step post-check still violated after {halvings} halvings (dt = {dt:e})")]
    CflExhausted { halvings: usize, dt: f64 },

    #[error("non-positive time step {0:e}")]
    NonPositiveTimeStep(f64),

    #[error("step limit of {0} reached before the final time")]
    StepLimit(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown case preset `{0}`")]
    UnknownCase(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonPositiveDensity { .. }
                | Error::NonPositiveDualDensity { .. }
                | Error::SolverDiverged { .. }
                | Error::IncompatibleRhs { .. }
                | Error::CflExhausted { .. }
                | Error::NonPositiveTimeStep(_)
                | Error::StepLimit(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
