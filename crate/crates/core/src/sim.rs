//! Deterministic trace-driven DASH playback simulation and QoE scoring.
//!
//! Each step waits (idle) if the new segment would overflow the buffer cap,
//! downloads the segment over the trace, and accounts any stall. The first
//! segment is fetched at the lowest level into an empty buffer; its download
//! time is startup delay and is excluded from the rebuffer total.

use std::io;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::ladder::BitrateLadder;
use crate::traces::{Trace, TraceError};
use crate::Error;

pub const DEFAULT_SEGMENT_DURATION: f64 = 4.0;
pub const DEFAULT_BUFFER_CAP: f64 = 60.0;
/// Rebuffer weight `w` of the QoE score, in quality units per second.
pub const DEFAULT_REBUFFER_WEIGHT: f64 = 4.3;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("session needs at least one segment")]
    NoSegments,
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error("segment {segment}: level {level} is not on a {levels}-level ladder")]
    InvalidLevel {
        segment: usize,
        level: usize,
        levels: usize,
    },
    #[error("segment {segment}: policy {policy} failed: {source}")]
    Policy {
        segment: usize,
        policy: String,
        source: Box<Error>,
    },
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub segment_duration: f64,
    pub buffer_cap: f64,
    pub segments: usize,
}

impl SessionConfig {
    /// One pass over the trace with the default segment length and cap.
    pub fn for_trace(trace: &Trace) -> Self {
        Self::for_trace_with(trace, DEFAULT_SEGMENT_DURATION, DEFAULT_BUFFER_CAP)
    }

    pub fn for_trace_with(trace: &Trace, segment_duration: f64, buffer_cap: f64) -> Self {
        let segments = ((trace.total_duration() / segment_duration).floor() as usize).max(1);
        SessionConfig {
            segment_duration,
            buffer_cap,
            segments,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.segments == 0 {
            return Err(SimError::NoSegments);
        }
        if !(self.segment_duration.is_finite() && self.segment_duration > 0.0) {
            return Err(SimError::InvalidConfig("segment duration must be positive".into()));
        }
        if !(self.buffer_cap.is_finite() && self.buffer_cap >= self.segment_duration) {
            return Err(SimError::InvalidConfig(
                "buffer cap must be at least one segment duration".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaybackState {
    pub wall_time: f64,
    /// Seconds of playable media.
    pub buffer: f64,
    pub next_segment: usize,
    pub last_level: Option<usize>,
    pub cumulative_rebuffer: f64,
}

impl PlaybackState {
    pub fn initial() -> Self {
        PlaybackState {
            wall_time: 0.0,
            buffer: 0.0,
            next_segment: 0,
            last_level: None,
            cumulative_rebuffer: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentEvent {
    pub index: usize,
    pub level: usize,
    /// Wall time when the step began (before any idle wait).
    pub start: f64,
    pub download: f64,
    pub rebuffer: f64,
    pub idle: f64,
    pub throughput_kbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub policy: String,
    pub config: SessionConfig,
    pub startup: f64,
    pub events: Vec<SegmentEvent>,
    pub final_state: PlaybackState,
}

#[derive(Serialize)]
struct CsvRow {
    index: usize,
    level: usize,
    start_s: f64,
    download_s: f64,
    rebuffer_s: f64,
    idle_s: f64,
    tput_kbps: f64,
}

impl SessionLog {
    pub fn levels(&self) -> Vec<usize> {
        self.events.iter().map(|e| e.level).collect()
    }

    pub fn total_rebuffer(&self) -> f64 {
        self.events.iter().map(|e| e.rebuffer).sum()
    }

    /// One row per event: index, level, start_s, download_s, rebuffer_s,
    /// idle_s, tput_kbps.
    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), SimError> {
        let mut writer = csv::Writer::from_writer(out);
        for e in &self.events {
            writer.serialize(CsvRow {
                index: e.index,
                level: e.level,
                start_s: e.start,
                download_s: e.download,
                rebuffer_s: e.rebuffer,
                idle_s: e.idle,
                tput_kbps: e.throughput_kbps,
            })?;
        }
        writer.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// What a policy sees when choosing the next segment.
#[derive(Debug, Clone, Copy)]
pub struct PolicyContext<'a> {
    pub state: &'a PlaybackState,
    /// Measured per-segment throughput (size / download time), oldest first.
    pub history: &'a [f64],
    pub ladder: &'a BitrateLadder,
    pub config: &'a SessionConfig,
}

impl PolicyContext<'_> {
    pub fn remaining_segments(&self) -> usize {
        self.config.segments - self.state.next_segment
    }
}

pub trait AbrPolicy {
    fn name(&self) -> String;
    fn select(&mut self, ctx: &PolicyContext<'_>) -> Result<usize, Error>;

    /// Time spent in the optimizer, for policies that run one.
    fn solve_time(&self) -> Option<Duration> {
        None
    }
}

impl<P: AbrPolicy + ?Sized> AbrPolicy for Box<P> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn select(&mut self, ctx: &PolicyContext<'_>) -> Result<usize, Error> {
        (**self).select(ctx)
    }

    fn solve_time(&self) -> Option<Duration> {
        (**self).solve_time()
    }
}

/// Downloads one segment at `level`.
pub fn step(
    state: &PlaybackState,
    level: usize,
    ladder: &BitrateLadder,
    trace: &Trace,
    segment_duration: f64,
    buffer_cap: f64,
) -> Result<(PlaybackState, SegmentEvent), SimError> {
    if level >= ladder.len() {
        return Err(SimError::InvalidLevel {
            segment: state.next_segment,
            level,
            levels: ladder.len(),
        });
    }
    let size = ladder.segment_kilobits(level, segment_duration);
    let idle = (state.buffer + segment_duration - buffer_cap).max(0.0);
    let buffer = state.buffer - idle;
    let download = trace.download_time(state.wall_time + idle, size)?;
    let rebuffer = (download - buffer).max(0.0);
    let next_buffer = ((buffer - download).max(0.0) + segment_duration).min(buffer_cap);
    let event = SegmentEvent {
        index: state.next_segment,
        level,
        start: state.wall_time,
        download,
        rebuffer,
        idle,
        throughput_kbps: size / download,
    };
    let next = PlaybackState {
        wall_time: state.wall_time + idle + download,
        buffer: next_buffer,
        next_segment: state.next_segment + 1,
        last_level: Some(level),
        cumulative_rebuffer: state.cumulative_rebuffer + rebuffer,
    };
    Ok((next, event))
}

/// Plays a whole session with `policy` choosing every segment after the first.
pub fn simulate_session(
    trace: &Trace,
    policy: &mut dyn AbrPolicy,
    ladder: &BitrateLadder,
    config: &SessionConfig,
) -> Result<SessionLog, SimError> {
    config.validate()?;
    let (mut state, mut first) = step(
        &PlaybackState::initial(),
        0,
        ladder,
        trace,
        config.segment_duration,
        config.buffer_cap,
    )?;
    let startup = first.download;
    first.rebuffer = 0.0;
    state.cumulative_rebuffer = 0.0;
    let mut history = vec![first.throughput_kbps];
    let mut events = Vec::with_capacity(config.segments);
    events.push(first);

    let mut warned = false;
    while state.next_segment < config.segments {
        let ctx = PolicyContext {
            state: &state,
            history: &history,
            ladder,
            config,
        };
        let level = policy.select(&ctx).map_err(|e| SimError::Policy {
            segment: state.next_segment,
            policy: policy.name(),
            source: Box::new(e),
        })?;
        let (next, event) = step(
            &state,
            level,
            ladder,
            trace,
            config.segment_duration,
            config.buffer_cap,
        )?;
        if !warned && next.wall_time > trace.total_duration() {
            log::warn!(
                "session outlasts the {:.1} s trace at segment {}; throughput wraps around",
                trace.total_duration(),
                event.index
            );
            warned = true;
        }
        history.push(event.throughput_kbps);
        events.push(event);
        state = next;
    }
    Ok(SessionLog {
        policy: policy.name(),
        config: *config,
        startup,
        events,
        final_state: state,
    })
}

/// QoE split into its three terms; `total = quality_sum - rebuffer_penalty - switch_sum`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QoEReport {
    pub quality_sum: f64,
    pub rebuffer_penalty: f64,
    pub switch_sum: f64,
    pub total: f64,
    pub rebuffer_seconds: f64,
    pub rebuffer_weight: f64,
}

impl QoEReport {
    pub fn from_parts(quality_sum: f64, rebuffer_seconds: f64, switch_sum: f64, w: f64) -> Self {
        let rebuffer_penalty = w * rebuffer_seconds;
        QoEReport {
            quality_sum,
            rebuffer_penalty,
            switch_sum,
            total: quality_sum - rebuffer_penalty - switch_sum,
            rebuffer_seconds,
            rebuffer_weight: w,
        }
    }
}

/// Scores a level sequence with its per-segment stalls.
pub fn score_levels(levels: &[usize], rebuffer: &[f64], qualities: &[f64], w: f64) -> QoEReport {
    let quality_sum = levels.iter().map(|&l| qualities[l]).sum();
    let switch_sum = levels
        .windows(2)
        .map(|p| (qualities[p[1]] - qualities[p[0]]).abs())
        .sum();
    QoEReport::from_parts(quality_sum, rebuffer.iter().sum(), switch_sum, w)
}

pub fn compute_qoe(log: &SessionLog, w: f64, ladder: &BitrateLadder) -> QoEReport {
    let rebuffer: Vec<f64> = log.events.iter().map(|e| e.rebuffer).collect();
    score_levels(&log.levels(), &rebuffer, ladder.qualities(), w)
}

/// Replays a fixed plan; the first entry is ignored because the simulator
/// always starts at the lowest level.
#[derive(Debug, Clone)]
pub struct FixedPlan {
    plan: Vec<usize>,
}

impl FixedPlan {
    pub fn new(plan: Vec<usize>) -> Self {
        FixedPlan { plan }
    }

    pub fn constant(level: usize) -> Self {
        FixedPlan { plan: vec![level] }
    }
}

impl AbrPolicy for FixedPlan {
    fn name(&self) -> String {
        "fixed".into()
    }

    fn select(&mut self, ctx: &PolicyContext<'_>) -> Result<usize, Error> {
        let n = ctx.state.next_segment;
        Ok(*self.plan.get(n).or(self.plan.last()).unwrap_or(&0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ladder() -> BitrateLadder {
        BitrateLadder::default()
    }

    fn state(buffer: f64) -> PlaybackState {
        PlaybackState {
            buffer,
            ..PlaybackState::initial()
        }
    }

    #[test]
    fn step_without_stall() {
        // level 0 is 1200 kb; 600 kbps makes a 2 s download
        let trace = Trace::constant(600.0, 100.0).unwrap();
        let (next, ev) = step(&state(4.0), 0, &ladder(), &trace, 4.0, 60.0).unwrap();
        assert_eq!(ev.download, 2.0);
        assert_eq!(ev.rebuffer, 0.0);
        assert_eq!(next.buffer, 6.0);
        assert_eq!(ev.throughput_kbps, 600.0);
    }

    #[test]
    fn step_with_stall() {
        let trace = Trace::constant(600.0, 100.0).unwrap();
        let (next, ev) = step(&state(1.0), 0, &ladder(), &trace, 4.0, 60.0).unwrap();
        assert_eq!(ev.rebuffer, 1.0);
        assert_eq!(next.buffer, 4.0);
        assert_eq!(next.cumulative_rebuffer, 1.0);
    }

    #[test]
    fn step_idles_at_cap() {
        let trace = Trace::constant(600.0, 100.0).unwrap();
        let (next, ev) = step(&state(59.0), 0, &ladder(), &trace, 4.0, 60.0).unwrap();
        assert_eq!(ev.idle, 3.0);
        assert_eq!(next.wall_time, 5.0);
        assert!(next.buffer <= 60.0);
    }

    #[test]
    fn step_rejects_unknown_level() {
        let trace = Trace::constant(600.0, 100.0).unwrap();
        assert!(matches!(
            step(&state(0.0), 6, &ladder(), &trace, 4.0, 60.0),
            Err(SimError::InvalidLevel { level: 6, .. })
        ));
    }

    #[test]
    fn ample_bandwidth_fixed_level() {
        let trace = Trace::constant(100_000.0, 400.0).unwrap();
        let config = SessionConfig { segment_duration: 4.0, buffer_cap: 60.0, segments: 10 };
        let log = simulate_session(&trace, &mut FixedPlan::constant(3), &ladder(), &config).unwrap();
        assert_eq!(log.events.len(), 10);
        assert_eq!(log.total_rebuffer(), 0.0);
        assert_eq!(log.events[0].level, 0);
        let later: Vec<_> = log.events[1..].iter().map(|e| (e.level, e.download, e.rebuffer)).collect();
        assert!(later.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn half_rate_stalls_every_segment() {
        // 300 kbps segments (1200 kb) over 150 kbps: 8 s downloads.
        // startup 8 s -> buffer 4; seg 2 stalls 4 s -> buffer 4; seg 3 the same.
        let trace = Trace::constant(150.0, 1000.0).unwrap();
        let config = SessionConfig { segment_duration: 4.0, buffer_cap: 60.0, segments: 3 };
        let log = simulate_session(&trace, &mut FixedPlan::constant(0), &ladder(), &config).unwrap();
        assert_eq!(log.startup, 8.0);
        let r: Vec<f64> = log.events.iter().map(|e| e.rebuffer).collect();
        assert_eq!(r, vec![0.0, 4.0, 4.0]);
        assert_eq!(log.final_state.wall_time, 24.0);
    }

    #[test]
    fn single_segment_session() {
        let trace = Trace::constant(1000.0, 10.0).unwrap();
        let config = SessionConfig { segment_duration: 4.0, buffer_cap: 60.0, segments: 1 };
        let log = simulate_session(&trace, &mut FixedPlan::constant(5), &ladder(), &config).unwrap();
        assert_eq!(log.events.len(), 1);
        assert_eq!(log.startup, 1.2);
        let qoe = compute_qoe(&log, 4.3, &ladder());
        assert_eq!(qoe.switch_sum, 0.0);
        assert_eq!(qoe.total, 0.3);
    }

    #[test]
    fn qoe_components() {
        let ladder = BitrateLadder::new(vec![100.0, 200.0], vec![1.0, 2.0]).unwrap();
        let report = score_levels(&[0, 1, 1], &[0.0, 1.0, 0.0], ladder.qualities(), 4.3);
        assert_eq!(report.quality_sum, 5.0);
        assert_eq!(report.rebuffer_penalty, 4.3);
        assert_eq!(report.switch_sum, 1.0);
        assert!((report.total + 0.3).abs() < 1e-12);
        let flat = score_levels(&[1; 4], &[0.0; 4], ladder.qualities(), 4.3);
        assert_eq!(flat.total, 8.0);
    }

    #[test]
    fn policy_errors_abort_with_context() {
        struct Failing;
        impl AbrPolicy for Failing {
            fn name(&self) -> String {
                "failing".into()
            }
            fn select(&mut self, _: &PolicyContext<'_>) -> Result<usize, Error> {
                Err(Error::Config("boom".into()))
            }
        }
        let trace = Trace::constant(1000.0, 100.0).unwrap();
        let config = SessionConfig { segment_duration: 4.0, buffer_cap: 60.0, segments: 3 };
        let err = simulate_session(&trace, &mut Failing, &ladder(), &config).unwrap_err();
        assert!(err.to_string().contains("segment 1: policy failing failed: boom"), "{err}");
    }

    #[test]
    fn csv_layout() {
        let trace = Trace::constant(1200.0, 100.0).unwrap();
        let config = SessionConfig { segment_duration: 4.0, buffer_cap: 60.0, segments: 2 };
        let log = simulate_session(&trace, &mut FixedPlan::constant(0), &ladder(), &config).unwrap();
        let mut out = Vec::new();
        log.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("index,level,start_s,download_s,rebuffer_s,idle_s,tput_kbps"));
        assert_eq!(lines.next(), Some("0,0,0.0,1.0,0.0,0.0,1200.0"));
        assert_eq!(lines.count(), 1);
    }

    #[test]
    fn session_length_defaults_to_one_pass() {
        let trace = Trace::constant(1000.0, 41.0).unwrap();
        assert_eq!(SessionConfig::for_trace(&trace).segments, 10);
        let short = Trace::constant(1000.0, 1.0).unwrap();
        assert_eq!(SessionConfig::for_trace(&short).segments, 1);
    }
}
