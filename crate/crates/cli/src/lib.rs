//! Experiment harness: configuration, policy construction and the
//! trace-by-policy comparison behind the `qubo-abr` binary.

pub mod compare;
pub mod config;
mod error;
pub mod policy;

pub use compare::{run_cells, run_compare, run_session, write_csv, write_json, Cell, ReportRow};
pub use config::{ExperimentConfig, OutputFormat, TraceFormat, TraceSpec, CONFIG_ENV};
pub use error::{CliError, EXIT_CONFIG, EXIT_FAILURE, EXIT_INFEASIBLE, EXIT_OK, EXIT_TRACE};
pub use policy::{make_policy, POLICY_NAMES};
