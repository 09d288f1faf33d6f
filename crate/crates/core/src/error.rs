use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite state encountered at grid node {node}")]
    NonFiniteState { node: usize },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("degenerate step size: denominator {denominator:e} below threshold")]
    DegenerateStep { denominator: f64 },

    #[error("understeer condition violated: c_r*l_r - c_f*l_f = {margin} must be positive")]
    UnderSteerViolation { margin: f64 },

    #[error("degenerate point spacing between samples {index} and {}", index + 1)]
    DegenerateSpacing { index: usize },

    #[error("course too short: requested {requested} m but only {available} m available")]
    CourseTooShort { requested: f64, available: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("course io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
