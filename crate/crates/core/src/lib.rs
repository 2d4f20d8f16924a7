//! QUBO formulation of adaptive bitrate selection, with the solvers,
//! simulator and reference policies used to evaluate it.

pub mod abr;
pub mod annealer;
pub mod baselines;
pub mod chain;
pub mod ladder;
pub mod qubo;
pub mod sim;
pub mod traces;

pub use abr::{AbrError, AbrQuboConfig, AbrWindow, QuboFullHorizonPolicy, QuboPolicy};
pub use annealer::{solve_exhaustive, solve_sa, SaParams, SolveError, SolveResult, Solver};
pub use baselines::{BaselineError, BbaParams, BbaPolicy, MpcParams, MpcPolicy, RatePolicy};
pub use chain::{solve_chain, ChainGroup, ChainStructure};
pub use ladder::{BitrateLadder, LadderError, QualityMap};
pub use qubo::{BitAssignment, IsingModel, QuboError, QuboModel};
pub use sim::{
    compute_qoe, simulate_session, AbrPolicy, PlaybackState, PolicyContext, QoEReport,
    SessionConfig, SessionLog, SimError,
};
pub use traces::{convert_hsdpa, parse_trace, predict_throughput, HsdpaColumns, Trace, TraceError};

use thiserror::Error;

/// Any error raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Qubo(#[from] QuboError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Ladder(#[from] LadderError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Abr(#[from] AbrError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("{0}")]
    Config(String),
}
