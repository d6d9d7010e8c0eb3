use thiserror::Error;

/// Errors raised by model evaluation, simulation, the Fokker-Planck solver
/// and the estimators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("model `{model}` evaluated outside its support at {x:?}")]
    EvalOutsideSupport { model: String, x: Vec<f64> },

    #[error("model `{model}` has nonpositive diffusion coefficient {value} at {x:?}")]
    NonpositiveDiffusion { model: String, x: Vec<f64>, value: f64 },

    #[error("model `{model}` has non-finite log equilibrium density at {x:?}")]
    NonFiniteLogDensity { model: String, x: Vec<f64> },

    #[error("model `{model}` has a singular drift; use the Metropolized scheme")]
    SingularDrift { model: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("horizon {horizon} is not an integer multiple of step {step}")]
    NonIntegerStepCount { horizon: f64, step: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time step must be positive, got {0}")]
    NonpositiveDt(f64),

    #[error("tridiagonal solve hit a zero pivot at row {row}")]
    SingularSolve { row: usize },

    #[error("equilibrium density is not strictly positive at cell {cell}")]
    NonpositiveEquilibrium { cell: usize },

    #[error("histogram edges must be strictly increasing")]
    UnsortedEdges,

    #[error("ensembles have different horizons ({0} vs {1})")]
    MismatchedHorizon(f64, f64),

    #[error("only {usable} rows have a resolvable error; at least 3 are needed")]
    NonpositiveError { usable: usize },

    #[error("adaptive quadrature did not converge (estimated error {estimate:e})")]
    QuadratureNonConvergence { estimate: f64 },

    #[error("reference density vanishes in bin {bin} where the estimate is positive")]
    SupportViolation { bin: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
