use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use qubo_abr::baselines::offline_optimal;
use qubo_abr::{convert_hsdpa, HsdpaColumns, QuboModel, SaParams, Solver};
use qubo_abr_cli::{
    run_compare, run_session, write_csv, write_json, CliError, ExperimentConfig, OutputFormat,
    TraceFormat, TraceSpec, CONFIG_ENV,
};

#[derive(Parser)]
#[command(name = "qubo-abr", version, about = "QUBO-based adaptive bitrate experiments")]
struct Cli {
    /// JSON experiment config.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize a QUBO model file.
    Solve(SolveArgs),
    /// Play one trace with one policy.
    Simulate(SimulateArgs),
    /// Every policy on every trace, as a table.
    Compare(CompareArgs),
    /// Convert a raw HSDPA log to the canonical trace format.
    ConvertTrace(ConvertArgs),
    /// Brute-force best plan for a short session.
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverKind {
    Exhaustive,
    Sa,
    Chain,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Canonical,
    Hsdpa,
}

impl From<FormatArg> for TraceFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Canonical => TraceFormat::Canonical,
            FormatArg::Hsdpa => TraceFormat::Hsdpa,
        }
    }
}

#[derive(Args)]
struct SaArgs {
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    t_initial: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    offset_step: Option<f64>,
}

impl SaArgs {
    fn apply(&self, p: &mut SaParams) {
        p.sweeps = self.sweeps.unwrap_or(p.sweeps);
        p.restarts = self.restarts.unwrap_or(p.restarts);
        p.t_initial = self.t_initial.or(p.t_initial);
        p.t_final = self.t_final.or(p.t_final);
        p.dynamic_offset_step = self.offset_step.or(p.dynamic_offset_step);
    }

    fn any(&self) -> bool {
        self.sweeps.is_some()
            || self.restarts.is_some()
            || self.t_initial.is_some()
            || self.t_final.is_some()
            || self.offset_step.is_some()
    }
}

/// Flags shared by the session commands; each overrides the config file.
#[derive(Args)]
struct SessionArgs {
    #[arg(long)]
    segment_duration: Option<f64>,
    #[arg(long)]
    buffer_cap: Option<f64>,
    /// Segments per session (default: the trace played once).
    #[arg(long)]
    segments: Option<usize>,
    #[arg(long)]
    rebuffer_weight: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// QUBO window length.
    #[arg(long)]
    window: Option<usize>,
    /// Solver of the `qubo` policy.
    #[arg(long, value_enum)]
    solver: Option<SolverKind>,
    #[command(flatten)]
    sa: SaArgs,
}

impl SessionArgs {
    fn apply(&self, c: &mut ExperimentConfig) {
        c.segment_duration = self.segment_duration.unwrap_or(c.segment_duration);
        c.buffer_cap = self.buffer_cap.unwrap_or(c.buffer_cap);
        c.segments = self.segments.or(c.segments);
        c.rebuffer_weight = self.rebuffer_weight.unwrap_or(c.rebuffer_weight);
        c.seed = self.seed.unwrap_or(c.seed);
        c.abr.window = self.window.unwrap_or(c.abr.window);
        match self.solver {
            Some(SolverKind::Chain) => c.solver = Solver::Chain,
            Some(SolverKind::Exhaustive) => c.solver = Solver::Exhaustive,
            Some(SolverKind::Sa) if !matches!(c.solver, Solver::Annealing(_)) => {
                c.solver = Solver::Annealing(SaParams::default())
            }
            _ => {}
        }
        if let Solver::Annealing(p) = &mut c.solver {
            self.sa.apply(p);
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Model in the text format (`nvars N`, `offset c`, `i j c` lines).
    model: PathBuf,
    #[arg(long, value_enum, default_value = "sa")]
    solver: SolverKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    sa: SaArgs,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long, default_value = "qubo")]
    policy: String,
    /// Also write the per-segment log as CSV.
    #[arg(long)]
    log_csv: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    session: SessionArgs,
}

#[derive(Args)]
struct CompareArgs {
    /// Trace files (repeatable); replaces the config's list.
    #[arg(long = "trace")]
    traces: Vec<PathBuf>,
    /// Policies (repeatable); replaces the config's list.
    #[arg(long = "policy")]
    policies: Vec<String>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputArg>,
    /// Fill the solve_ms column with measured solver time.
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    session: SessionArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputArg {
    Csv,
    Json,
}

#[derive(Args)]
struct ConvertArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// 0-based column holding the millisecond timestamp.
    #[arg(long)]
    ts_col: Option<usize>,
    /// 0-based column holding the byte count.
    #[arg(long)]
    bytes_col: Option<usize>,
    /// Fixed logging interval instead of timestamp gaps.
    #[arg(long)]
    interval_ms: Option<f64>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    session: SessionArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = || match &cli.config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    };
    match &cli.command {
        Command::Solve(args) => solve(args),
        Command::Simulate(args) => simulate(args, config()?),
        Command::Compare(args) => compare(args, config()?),
        Command::ConvertTrace(args) => convert(args, config()?),
        Command::Oracle(args) => oracle(args, config()?),
    }
}

fn emit(output: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    let io_err = |context: String| move |source| CliError::Io { context, source };
    match output {
        Some(path) => fs::write(path, bytes).map_err(io_err(path.display().to_string())),
        None => io::stdout()
            .lock()
            .write_all(bytes)
            .map_err(io_err("stdout".into())),
    }
}

fn to_json(value: &serde_json::Value) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    text.push('\n');
    text.into_bytes()
}

fn trace_spec(path: &Path, format: Option<FormatArg>) -> TraceSpec {
    match format {
        Some(f) => TraceSpec::Detailed {
            path: path.to_path_buf(),
            format: f.into(),
            name: None,
        },
        None => TraceSpec::Path(path.to_path_buf()),
    }
}

fn solve(args: &SolveArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.model)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.model.display())))?;
    let model = QuboModel::parse(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.model.display())))?;
    let solver = match args.solver {
        SolverKind::Exhaustive => Solver::Exhaustive,
        SolverKind::Chain => {
            return Err(CliError::Config(
                "the chain solver needs group structure; raw models take exhaustive or sa".into(),
            ))
        }
        SolverKind::Sa => {
            let mut p = SaParams::default().with_seed(args.seed);
            args.sa.apply(&mut p);
            Solver::Annealing(p)
        }
    };
    if !matches!(solver, Solver::Annealing(_)) && args.sa.any() {
        log::warn!("annealing flags are ignored by the {} solver", solver.name());
    }
    let result = solver.solve(&model).map_err(|e| match e {
        qubo_abr::SolveError::InvalidParams(m) => CliError::Config(m),
        other => other.into(),
    })?;
    emit(
        None,
        &to_json(&json!({
            "solver": solver.name(),
            "num_vars": model.num_vars(),
            "energy": result.energy,
            "assignment": result.assignment.to_string(),
            "restarts_used": result.restarts_used,
            "sweeps_used": result.sweeps_used,
            "seed": result.seed,
        })),
    )
}

fn simulate(args: &SimulateArgs, mut config: ExperimentConfig) -> Result<(), CliError> {
    args.session.apply(&mut config);
    config.policies = vec![args.policy.clone()];
    config.validate()?;
    let spec = trace_spec(&args.trace, args.format);
    let trace = spec.load(&config.hsdpa)?;
    let cell = run_session(&config, &spec.name(), &trace, &args.policy)?;
    if let Some(path) = &args.log_csv {
        let file = fs::File::create(path).map_err(|source| CliError::Io {
            context: path.display().to_string(),
            source,
        })?;
        cell.log.write_csv(file)?;
    }
    emit(
        args.output.as_deref(),
        &to_json(&json!({
            "trace": spec.name(),
            "policy": args.policy,
            "qoe": cell.report,
            "log": cell.log,
        })),
    )
}

fn compare(args: &CompareArgs, mut config: ExperimentConfig) -> Result<(), CliError> {
    args.session.apply(&mut config);
    if !args.traces.is_empty() {
        config.traces = args.traces.iter().cloned().map(TraceSpec::Path).collect();
    }
    if !args.policies.is_empty() {
        config.policies = args.policies.clone();
    }
    if let Some(f) = args.format {
        config.format = match f {
            OutputArg::Csv => OutputFormat::Csv,
            OutputArg::Json => OutputFormat::Json,
        };
    }
    config.timing |= args.timing;
    let output = args.output.clone().or(config.output.clone());
    let rows = run_compare(&config)?;
    let mut bytes = Vec::new();
    match config.format {
        OutputFormat::Csv => write_csv(&rows, &mut bytes)?,
        OutputFormat::Json => write_json(&rows, &mut bytes)?,
    }
    emit(output.as_deref(), &bytes)
}

fn convert(args: &ConvertArgs, config: ExperimentConfig) -> Result<(), CliError> {
    let mut columns: HsdpaColumns = config.hsdpa;
    columns.ts_col = args.ts_col.unwrap_or(columns.ts_col);
    columns.bytes_col = args.bytes_col.unwrap_or(columns.bytes_col);
    columns.interval_ms = args.interval_ms.or(columns.interval_ms);
    let text = fs::read_to_string(&args.input)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.input.display())))?;
    let trace = convert_hsdpa(&text, &columns).map_err(|source| CliError::Trace {
        path: args.input.display().to_string(),
        source,
    })?;
    emit(args.output.as_deref(), trace.to_text().as_bytes())
}

fn oracle(args: &OracleArgs, mut config: ExperimentConfig) -> Result<(), CliError> {
    args.session.apply(&mut config);
    config.policies.clear();
    config.validate()?;
    let spec = trace_spec(&args.trace, args.format);
    let trace = spec.load(&config.hsdpa)?;
    let ladder = config.ladder.build()?;
    let session = config.session_for(&trace);
    let (plan, report) = offline_optimal(&trace, &ladder, &session, config.rebuffer_weight)
        .map_err(|e| match e {
            qubo_abr::BaselineError::Capacity { .. } => CliError::Infeasible(e.to_string()),
            other => other.into(),
        })?;
    emit(
        args.output.as_deref(),
        &to_json(&json!({
            "trace": spec.name(),
            "segments": session.segments,
            "plan": plan,
            "qoe": report,
        })),
    )
}
