use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("no exceptional twist for m = {m}: requires m² < 2")]
    NoSolution { m: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid filling: N = {n} with {modes} modes")]
    InvalidFilling { n: usize, modes: usize },
    #[error("operation requires a {expected} basis")]
    LabelingMismatch { expected: &'static str },
    #[error("momentum sectors are undefined with disorder (sigma = {sigma})")]
    NotTranslationInvariant { sigma: f64 },
    #[error("eigensolver failed: {0}")]
    EigensolveFailure(String),
    #[error("cluster diameter {diameter:e} is within a factor 10 of tolerance {tol:e}")]
    AmbiguousClustering { diameter: f64, tol: f64 },
    #[error("parity mismatch: {0}")]
    ParityMismatch(String),
    #[error("coefficient undefined on the intended branch: {0}")]
    DefectiveCoefficient(String),
    #[error("division by zero: {0}")]
    DivisionByZero(String),
    #[error("required coefficient vanishes: {0}")]
    DefectiveInput(String),
    #[error("invalid grid or probe specification: {0}")]
    InvalidSpec(String),
    #[error("continuation step too coarse at step {step:e}")]
    StepTooCoarse { step: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
