use fsbench_core::{Error, ErrorClass};
use thiserror::Error as ThisError;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] Error),

    #[error("{failed} of {total} cells failed; first failure in {stem}: {first}")]
    CellsFailed {
        failed: usize,
        total: usize,
        stem: String,
        first: Box<Error>,
    },
}

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

fn code_for(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Config => EXIT_CONFIG,
        ErrorClass::Data => EXIT_DATA,
        ErrorClass::Infeasible => EXIT_INFEASIBLE,
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(e) => code_for(e.class()),
            CliError::CellsFailed { first, .. } => code_for(first.class()),
        }
    }
}
