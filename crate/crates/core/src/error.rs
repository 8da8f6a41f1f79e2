use thiserror::Error;

/// Errors produced by the calibration toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibError {
    #[error("MassNotOne: total mass {total} is not within 1e-9 of 1")]
    MassNotOne { total: f64 },

    #[error("AtomOutOfRange: atom (p={p}, y={y}) is outside [0,1] x {{0,1}}")]
    AtomOutOfRange { p: f64, y: u8 },

    #[error("NegativeMass: atom (p={p}, y={y}) has mass {mass}")]
    NegativeMass { p: f64, y: u8, mass: f64 },

    #[error("NonFinite: {what} must be finite")]
    NonFinite { what: &'static str },

    #[error("InvalidTask: {0}")]
    InvalidTask(String),

    #[error("RangeViolation: post-processing maps {p} to {value}, outside [0,1]")]
    RangeViolation { p: f64, value: f64 },

    #[error("InvalidPostProcessing: {0}")]
    InvalidPostProcessing(String),

    #[error("InvalidLoss: {0}")]
    InvalidLoss(String),

    #[error("InvalidParameter: {0}")]
    InvalidParameter(String),

    #[error("DimensionMismatch: {0}")]
    DimensionMismatch(String),

    #[error("NumericalFailure: {0}")]
    NumericalFailure(String),

    #[error("SolverStatus: linear program ended as {0}")]
    SolverStatus(&'static str),

    #[error("TauMismatch: label marginals differ ({left} vs {right})")]
    TauMismatch { left: f64, right: f64 },

    #[error("SupportTooLarge: size {size} exceeds the limit {limit}")]
    SupportTooLarge { size: usize, limit: usize },

    #[error(
        "NotCalibratedWitness: post-processed distribution is not calibrated (worst gap {gap})"
    )]
    NotCalibratedWitness { gap: f64 },

    #[error("NotCalibratedBenchmark: benchmark distribution is not calibrated (worst gap {gap})")]
    NotCalibratedBenchmark { gap: f64 },

    #[error("ParameterOrder: {0}")]
    ParameterOrder(String),

    #[error("ParameterConstraint: {0}")]
    ParameterConstraint(String),

    #[error("Parse: {0}")]
    Parse(String),

    #[error("Io: {0}")]
    Io(String),
}

/// Coarse grouping used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Solver,
    Size,
}

impl CalibError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            CalibError::NumericalFailure(_) | CalibError::SolverStatus(_) => ErrorKind::Solver,
            CalibError::SupportTooLarge { .. } => ErrorKind::Size,
            _ => ErrorKind::Input,
        }
    }
}

pub type Result<T> = std::result::Result<T, CalibError>;
