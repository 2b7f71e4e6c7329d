use thiserror::Error;

/// Errors produced by the `gotmix` library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid family specification: {0}")]
    InvalidFamily(String),

    #[error("theta = {value} outside [0, {theta_star}]")]
    ThetaOutOfRange { value: f64, theta_star: f64 },

    #[error("series truncation budget unattainable: {0}")]
    TruncationBudget(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid histogram: {0}")]
    InvalidHistogram(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature tolerance {tol:e} unattainable within {max_depth} bisection levels")]
    QuadratureTolerance { tol: f64, max_depth: u32 },

    #[error("tail cut not found below x = {0}")]
    TailCutNotFound(u64),

    #[error("observation x = {0} has zero probability under every theta in [0, theta*]")]
    InfeasibleObservation(u64),

    #[error("degree {degree} exceeds the supported maximum {max}")]
    DegreeTooLarge { degree: usize, max: usize },

    #[error("numerical overflow: {0}")]
    Overflow(String),

    #[error("eigensolver failed to converge after {0} iterations")]
    EigenNoConvergence(usize),

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("csv error: {0}")]
    Csv(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
