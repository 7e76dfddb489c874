use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input files, corrupt payloads, degenerate vectors.
    Data,
    /// Sampling or protocol preconditions cannot be met.
    Infeasible,
    /// Configuration or mapping mistakes.
    Config,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt payload: {what}: expected {expected} bytes, found {actual}")]
    Corrupt {
        what: &'static str,
        expected: u64,
        actual: u64,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("degenerate vector at row {row}: norm is zero")]
    DegenerateVector { row: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("mapping error: {0}")]
    Mapping(String),

    #[error("empty result: {0}")]
    EmptyResult(String),

    #[error("infeasible episode spec: {0}")]
    InfeasibleSpec(String),

    #[error("infeasible query count: requested {requested}, at most {max_feasible} available")]
    InfeasibleQuery {
        requested: usize,
        max_feasible: usize,
    },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("episode {index} failed: {source}")]
    Episode {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io(_)
            | Error::Format(_)
            | Error::Corrupt { .. }
            | Error::Validation(_)
            | Error::DegenerateVector { .. }
            | Error::Dimension { .. } => ErrorClass::Data,
            Error::InfeasibleSpec(_)
            | Error::InfeasibleQuery { .. }
            | Error::EmptyResult(_)
            | Error::InsufficientData { .. }
            | Error::Protocol(_) => ErrorClass::Infeasible,
            Error::Mapping(_) | Error::Domain(_) => ErrorClass::Config,
            Error::Episode { source, .. } => source.class(),
        }
    }
}
