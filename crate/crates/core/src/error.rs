use thiserror::Error;

/// Errors raised by the threshold-MA toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TmaError {
    #[error("invalid model orders: {0}")]
    InvalidOrders(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("length mismatch: {0}")]
    Length(String),

    #[error("parameters are not invertible (contraction constant a = {a:.6})")]
    NotInvertible { a: f64 },

    #[error("data error: {0}")]
    Data(String),

    #[error("degenerate threshold grid: {0}")]
    DegenerateGrid(String),

    #[error("invalid degrees of freedom: {0}")]
    InvalidDf(String),

    #[error("undefined autocorrelation: {0}")]
    UndefinedAcf(String),

    #[error("kernel is degenerate: {0}")]
    KernelDegenerate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error("config error: {0}")]
    Config(String),
}

impl TmaError {
    /// Coarse classification used by front ends to pick exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            TmaError::InvalidOrders(_)
            | TmaError::InvalidSpec(_)
            | TmaError::InvalidDf(_)
            | TmaError::Config(_) => ErrorKind::Validation,
            TmaError::Length(_)
            | TmaError::Data(_)
            | TmaError::DegenerateGrid(_)
            | TmaError::UndefinedAcf(_) => ErrorKind::Data,
            TmaError::NotInvertible { .. }
            | TmaError::KernelDegenerate(_)
            | TmaError::Numerical(_)
            | TmaError::Experiment(_) => ErrorKind::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Data,
    Numerical,
}

pub type Result<T> = std::result::Result<T, TmaError>;
