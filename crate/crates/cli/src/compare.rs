use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use qubo_abr::{compute_qoe, simulate_session, QoEReport, SessionLog, Trace};

use crate::config::ExperimentConfig;
use crate::policy::make_policy;
use crate::CliError;

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub trace: String,
    pub policy: String,
    pub qoe: f64,
    pub quality_sum: f64,
    pub rebuf_s: f64,
    pub switch_sum: f64,
    pub mean_level: f64,
    pub solve_ms: Option<f64>,
}

/// A finished (trace, policy) session.
#[derive(Debug)]
pub struct Cell {
    pub row: ReportRow,
    pub report: QoEReport,
    pub log: SessionLog,
}

pub fn load_traces(config: &ExperimentConfig) -> Result<Vec<(String, Trace)>, CliError> {
    if config.traces.is_empty() {
        return Err(CliError::Config("no traces given".into()));
    }
    config
        .traces
        .iter()
        .map(|spec| Ok((spec.name(), spec.load(&config.hsdpa)?)))
        .collect()
}

pub fn run_session(
    config: &ExperimentConfig,
    trace_name: &str,
    trace: &Trace,
    policy: &str,
) -> Result<Cell, CliError> {
    let ladder = config.ladder.build()?;
    let session = config.session_for(trace);
    let mut p = make_policy(policy, config, trace)?;
    let log = simulate_session(trace, &mut p, &ladder, &session)?;
    let report = compute_qoe(&log, config.rebuffer_weight, &ladder);
    let levels = log.levels();
    let mean_level = levels.iter().sum::<usize>() as f64 / levels.len() as f64;
    let solve_ms = if config.timing {
        p.solve_time().map(|d| d.as_secs_f64() * 1e3)
    } else {
        None
    };
    Ok(Cell {
        row: ReportRow {
            trace: trace_name.to_string(),
            policy: policy.to_string(),
            qoe: report.total,
            quality_sum: report.quality_sum,
            rebuf_s: report.rebuffer_seconds,
            switch_sum: report.switch_sum,
            mean_level,
            solve_ms,
        },
        report,
        log,
    })
}

/// Every (trace, policy) session, sorted by trace name then policy name.
/// Cells run in parallel; the result does not depend on scheduling.
pub fn run_cells(config: &ExperimentConfig) -> Result<Vec<Cell>, CliError> {
    config.validate()?;
    let traces = load_traces(config)?;
    let jobs: Vec<(&str, &Trace, &str)> = traces
        .iter()
        .flat_map(|(name, trace)| {
            config
                .policies
                .iter()
                .map(move |p| (name.as_str(), trace, p.as_str()))
        })
        .collect();
    let mut cells = jobs
        .into_par_iter()
        .map(|(name, trace, policy)| run_session(config, name, trace, policy))
        .collect::<Result<Vec<_>, _>>()?;
    cells.sort_by(|a, b| {
        (&a.row.trace, &a.row.policy).cmp(&(&b.row.trace, &b.row.policy))
    });
    Ok(cells)
}

pub fn run_compare(config: &ExperimentConfig) -> Result<Vec<ReportRow>, CliError> {
    Ok(run_cells(config)?.into_iter().map(|c| c.row).collect())
}

pub fn write_csv<W: Write>(rows: &[ReportRow], out: W) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| CliError::Output(e.to_string()))?;
    }
    writer.flush().map_err(|e| CliError::Output(e.to_string()))
}

pub fn write_json<W: Write>(rows: &[ReportRow], mut out: W) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut out, rows).map_err(|e| CliError::Output(e.to_string()))?;
    writeln!(out).map_err(|e| CliError::Output(e.to_string()))
}
