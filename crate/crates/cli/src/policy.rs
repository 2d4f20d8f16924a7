use qubo_abr::{
    AbrPolicy, BbaPolicy, MpcPolicy, QuboFullHorizonPolicy, QuboPolicy, RatePolicy, Trace,
};

use crate::config::ExperimentConfig;
use crate::CliError;

/// Policy names accepted by the harness, sorted.
pub const POLICY_NAMES: [&str; 5] = ["bba", "mpc", "qubo", "qubo-full", "rate"];

pub fn check_policy_name(name: &str) -> Result<(), CliError> {
    if POLICY_NAMES.contains(&name) {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "unknown policy '{name}'; valid names: {}",
            POLICY_NAMES.join(", ")
        )))
    }
}

/// Builds a fresh policy. `qubo-full` needs the trace it will play.
pub fn make_policy(
    name: &str,
    config: &ExperimentConfig,
    trace: &Trace,
) -> Result<Box<dyn AbrPolicy>, CliError> {
    check_policy_name(name)?;
    Ok(match name {
        "bba" => Box::new(BbaPolicy { params: config.bba }),
        "rate" => Box::new(RatePolicy {
            safety: config.rate_safety,
            predictor_window: config.predictor_window,
        }),
        "mpc" => Box::new(MpcPolicy { params: config.mpc }),
        "qubo" => {
            let mut p = QuboPolicy::new(config.abr.clone(), config.solver.clone(), config.seed);
            p.predictor_window = config.predictor_window;
            Box::new(p)
        }
        "qubo-full" => {
            let mut p = QuboFullHorizonPolicy::new(config.abr.clone(), trace.clone());
            p.passes = config.full_horizon_passes;
            Box::new(p)
        }
        _ => unreachable!("name was checked"),
    })
}
