use qubo_abr::{Error, SimError, SolveError, TraceError};
use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_TRACE: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("trace {path}: {source}")]
    Trace { path: String, source: TraceError },
    #[error("{0}")]
    Infeasible(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] Error),
    #[error("output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Trace { .. } => EXIT_TRACE,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Io { .. } | CliError::Output(_) => EXIT_FAILURE,
            CliError::Core(e) => core_exit_code(e),
        }
    }
}

fn core_exit_code(error: &Error) -> i32 {
    match error {
        Error::Config(_) | Error::Ladder(_) => EXIT_CONFIG,
        Error::Trace(TraceError::EmptyHistory) => EXIT_FAILURE,
        Error::Trace(_) => EXIT_TRACE,
        Error::Solve(SolveError::TooManyVariables { .. } | SolveError::NotChainStructured(_)) => {
            EXIT_INFEASIBLE
        }
        Error::Solve(SolveError::InvalidParams(_)) => EXIT_CONFIG,
        Error::Baseline(qubo_abr::BaselineError::Capacity { .. }) => EXIT_INFEASIBLE,
        Error::Baseline(qubo_abr::BaselineError::InvalidParams(_)) => EXIT_CONFIG,
        Error::Baseline(qubo_abr::BaselineError::Sim(e)) | Error::Sim(e) => sim_exit_code(e),
        Error::Abr(qubo_abr::AbrError::InvalidConfig(_)) => EXIT_CONFIG,
        Error::Abr(qubo_abr::AbrError::Solve(SolveError::TooManyVariables { .. })) => EXIT_INFEASIBLE,
        _ => EXIT_FAILURE,
    }
}

fn sim_exit_code(error: &SimError) -> i32 {
    match error {
        SimError::Policy { source, .. } => core_exit_code(source),
        SimError::InvalidConfig(_) | SimError::NoSegments => EXIT_CONFIG,
        _ => EXIT_FAILURE,
    }
}

macro_rules! impl_from_core {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Core(e.into())
            }
        }
    )*};
}

impl_from_core!(
    SimError,
    SolveError,
    qubo_abr::AbrError,
    qubo_abr::BaselineError,
    qubo_abr::QuboError,
    qubo_abr::LadderError
);
