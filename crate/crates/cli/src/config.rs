//! JSON experiment configuration. Every field has a default, so `{}` is a
//! valid config; command-line flags override file values.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qubo_abr::ladder::DEFAULT_LADDER_KBPS;
use qubo_abr::sim::{DEFAULT_BUFFER_CAP, DEFAULT_REBUFFER_WEIGHT, DEFAULT_SEGMENT_DURATION};
use qubo_abr::traces::DEFAULT_PREDICTOR_WINDOW;
use qubo_abr::{
    AbrQuboConfig, BbaParams, BitrateLadder, HsdpaColumns, MpcParams, QualityMap, SessionConfig,
    Solver, Trace,
};

use crate::CliError;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "QUBO_ABR_CONFIG";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    /// `<time_s> <kbps>` lines.
    #[default]
    Canonical,
    /// Raw HSDPA-style logs, converted on load.
    Hsdpa,
}

/// A trace file given either as a bare path or as a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TraceSpec {
    Path(PathBuf),
    Detailed {
        path: PathBuf,
        #[serde(default)]
        format: TraceFormat,
        #[serde(default)]
        name: Option<String>,
    },
}

impl TraceSpec {
    pub fn path(&self) -> &Path {
        match self {
            TraceSpec::Path(p) | TraceSpec::Detailed { path: p, .. } => p,
        }
    }

    pub fn format(&self) -> TraceFormat {
        match self {
            TraceSpec::Path(p) if p.extension().is_some_and(|e| e == "log") => TraceFormat::Hsdpa,
            TraceSpec::Path(_) => TraceFormat::Canonical,
            TraceSpec::Detailed { format, .. } => *format,
        }
    }

    /// Report label: the explicit name or the file stem.
    pub fn name(&self) -> String {
        match self {
            TraceSpec::Detailed { name: Some(n), .. } => n.clone(),
            _ => self
                .path()
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| self.path().display().to_string()),
        }
    }

    pub fn load(&self, columns: &HsdpaColumns) -> Result<Trace, CliError> {
        let path = self.path();
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read trace {}: {e}", path.display()))
        })?;
        let parsed = match self.format() {
            TraceFormat::Canonical => qubo_abr::parse_trace(&text),
            TraceFormat::Hsdpa => qubo_abr::convert_hsdpa(&text, columns),
        };
        parsed.map_err(|source| CliError::Trace {
            path: path.display().to_string(),
            source,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LadderConfig {
    pub bitrates_kbps: Vec<f64>,
    pub quality_map: QualityMap,
    /// Explicit per-level quality; overrides `quality_map`.
    pub quality: Option<Vec<f64>>,
}

impl Default for LadderConfig {
    fn default() -> Self {
        LadderConfig {
            bitrates_kbps: DEFAULT_LADDER_KBPS.to_vec(),
            quality_map: QualityMap::Linear,
            quality: None,
        }
    }
}

impl LadderConfig {
    pub fn build(&self) -> Result<BitrateLadder, CliError> {
        let ladder = match &self.quality {
            Some(q) => BitrateLadder::new(self.bitrates_kbps.clone(), q.clone()),
            None => BitrateLadder::with_map(self.bitrates_kbps.clone(), self.quality_map),
        };
        ladder.map_err(|e| CliError::Config(format!("ladder: {e}")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub traces: Vec<TraceSpec>,
    pub hsdpa: HsdpaColumns,
    pub policies: Vec<String>,
    pub ladder: LadderConfig,
    pub segment_duration: f64,
    pub buffer_cap: f64,
    /// Segments per session; `None` plays each trace once.
    pub segments: Option<usize>,
    pub rebuffer_weight: f64,
    pub abr: AbrQuboConfig,
    /// Solver of the `qubo` policy.
    pub solver: Solver,
    /// Refinement passes of the `qubo-full` policy.
    pub full_horizon_passes: usize,
    pub predictor_window: usize,
    pub bba: BbaParams,
    pub rate_safety: f64,
    pub mpc: MpcParams,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
    /// Fill the `solve_ms` column; makes the report timing dependent.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            traces: Vec::new(),
            hsdpa: HsdpaColumns::default(),
            policies: ["bba", "rate", "mpc", "qubo"].map(String::from).to_vec(),
            ladder: LadderConfig::default(),
            segment_duration: DEFAULT_SEGMENT_DURATION,
            buffer_cap: DEFAULT_BUFFER_CAP,
            segments: None,
            rebuffer_weight: DEFAULT_REBUFFER_WEIGHT,
            abr: AbrQuboConfig::default(),
            solver: Solver::Chain,
            full_horizon_passes: qubo_abr::abr::DEFAULT_FULL_HORIZON_PASSES,
            predictor_window: DEFAULT_PREDICTOR_WINDOW,
            bba: BbaParams::default(),
            rate_safety: 1.0,
            mpc: MpcParams::default(),
            seed: 0,
            output: None,
            format: OutputFormat::Csv,
            timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        ExperimentConfig::from_json(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Reads `path`, or the file named by [`CONFIG_ENV`], or the defaults.
    pub fn resolve(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => ExperimentConfig::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => ExperimentConfig::load(Path::new(&p)),
                _ => Ok(ExperimentConfig::default()),
            },
        }
    }

    pub fn session_for(&self, trace: &Trace) -> SessionConfig {
        let mut session = SessionConfig::for_trace_with(trace, self.segment_duration, self.buffer_cap);
        if let Some(n) = self.segments {
            session.segments = n;
        }
        session
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for name in &self.policies {
            crate::policy::check_policy_name(name)?;
        }
        self.ladder.build()?;
        self.abr
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.bba
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.mpc.window == 0 || self.predictor_window == 0 || self.mpc.predictor_window == 0 {
            return Err(CliError::Config("windows must be at least 1".into()));
        }
        if !(self.rate_safety > 0.0) {
            return Err(CliError::Config("rate_safety must be positive".into()));
        }
        if !(self.segment_duration > 0.0 && self.buffer_cap >= self.segment_duration) {
            return Err(CliError::Config(
                "segment_duration must be positive and at most buffer_cap".into(),
            ));
        }
        if self.segments == Some(0) {
            return Err(CliError::Config("segments must be at least 1".into()));
        }
        if let Solver::Annealing(p) = &self.solver {
            p.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        assert_eq!(ExperimentConfig::from_json("{}").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn traces_accept_paths_and_tables() {
        let c = ExperimentConfig::from_json(
            r#"{"traces": ["a/t1.txt", {"path": "b.log", "format": "hsdpa", "name": "tram"}, "c/f.log"]}"#,
        )
        .unwrap();
        assert_eq!(c.traces[0].name(), "t1");
        assert_eq!(c.traces[0].format(), TraceFormat::Canonical);
        assert_eq!(c.traces[1].name(), "tram");
        assert_eq!(c.traces[1].format(), TraceFormat::Hsdpa);
        assert_eq!(c.traces[2].format(), TraceFormat::Hsdpa);
    }

    #[test]
    fn solver_and_weights_parse() {
        let c = ExperimentConfig::from_json(
            r#"{"solver": {"kind": "annealing", "sweeps": 50}, "abr": {"window": 3, "switch_weight": 2.0}}"#,
        )
        .unwrap();
        assert!(matches!(c.solver, Solver::Annealing(ref p) if p.sweeps == 50 && p.restarts == 8));
        assert_eq!(c.abr.window, 3);
        assert_eq!(c.abr.quality_weight, 1.0);
    }

    #[test]
    fn unknown_keys_and_policies_are_config_errors() {
        assert!(matches!(ExperimentConfig::from_json(r#"{"sedd": 1}"#), Err(CliError::Config(_))));
        let c = ExperimentConfig::from_json(r#"{"policies": ["pensieve"]}"#).unwrap();
        let err = c.validate().unwrap_err();
        assert_eq!(err.exit_code(), crate::EXIT_CONFIG);
        assert!(err.to_string().contains("bba"));
    }
}
