//! Throughput traces: canonical text format, HSDPA log conversion, trace
//! integration, and the harmonic-mean bandwidth predictor.
//!
//! A trace is piecewise constant: sample `i` holds from its start time to
//! the next sample's start (the last one to `total_duration`). Queries past
//! the end wrap around cyclically.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of samples the predictor averages.
pub const DEFAULT_PREDICTOR_WINDOW: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: time {time} does not increase")]
    NonMonotone { line: usize, time: f64 },
    #[error("line {line}: negative throughput {value}")]
    NegativeThroughput { line: usize, value: f64 },
    #[error("row {row}: {message}")]
    Convert { row: usize, message: String },
    #[error("trace is empty")]
    Empty,
    #[error("trace has zero total capacity")]
    ZeroCapacity,
    #[error("throughput history is empty")]
    EmptyHistory,
    #[error("throughput history contains non-positive sample {0}")]
    NonPositiveSample(f64),
    #[error("invalid trace: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub start: f64,
    pub kbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    samples: Vec<Sample>,
    total_duration: f64,
}

impl Trace {
    /// Builds a trace from `(start_s, kbps)` pairs.
    pub fn new(samples: Vec<Sample>, total_duration: f64) -> Result<Self, TraceError> {
        let first = samples.first().ok_or(TraceError::Empty)?;
        if first.start != 0.0 {
            return Err(TraceError::Invalid(format!(
                "first sample starts at {} instead of 0",
                first.start
            )));
        }
        for (i, w) in samples.windows(2).enumerate() {
            if !(w[1].start > w[0].start) {
                return Err(TraceError::NonMonotone {
                    line: i + 2,
                    time: w[1].start,
                });
            }
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.kbps.is_finite() || !s.start.is_finite() {
                return Err(TraceError::Invalid(format!("sample {} is not finite", i + 1)));
            }
            if s.kbps < 0.0 {
                return Err(TraceError::NegativeThroughput {
                    line: i + 1,
                    value: s.kbps,
                });
            }
        }
        let last = samples[samples.len() - 1].start;
        if !(total_duration.is_finite() && total_duration > last) {
            return Err(TraceError::Invalid(format!(
                "duration {total_duration} must exceed the last sample start {last}"
            )));
        }
        let trace = Trace {
            samples,
            total_duration,
        };
        if trace.cycle_capacity() <= 0.0 {
            return Err(TraceError::ZeroCapacity);
        }
        Ok(trace)
    }

    /// Evenly spaced samples of `interval` seconds each.
    pub fn from_rates(kbps: &[f64], interval: f64) -> Result<Self, TraceError> {
        let samples = kbps
            .iter()
            .enumerate()
            .map(|(i, &r)| Sample {
                start: i as f64 * interval,
                kbps: r,
            })
            .collect();
        Trace::new(samples, kbps.len() as f64 * interval)
    }

    pub fn constant(kbps: f64, duration: f64) -> Result<Self, TraceError> {
        Trace::new(vec![Sample { start: 0.0, kbps }], duration)
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn total_duration(&self) -> f64 {
        self.total_duration
    }

    fn end_of(&self, i: usize) -> f64 {
        self.samples
            .get(i + 1)
            .map_or(self.total_duration, |s| s.start)
    }

    /// Kilobits delivered over one full pass of the trace.
    pub fn cycle_capacity(&self) -> f64 {
        (0..self.samples.len())
            .map(|i| self.samples[i].kbps * (self.end_of(i) - self.samples[i].start))
            .sum()
    }

    pub fn mean_kbps(&self) -> f64 {
        self.cycle_capacity() / self.total_duration
    }

    /// Throughput in effect at time `t` (cyclic).
    pub fn rate_at(&self, t: f64) -> f64 {
        let local = t.rem_euclid(self.total_duration);
        let i = self.samples.partition_point(|s| s.start <= local).saturating_sub(1);
        self.samples[i].kbps
    }

    fn locate(&self, t: f64) -> (f64, usize, f64) {
        let cycles = (t / self.total_duration).floor();
        let mut local = t - cycles * self.total_duration;
        if local >= self.total_duration {
            local = 0.0;
        }
        let i = self.samples.partition_point(|s| s.start <= local).saturating_sub(1);
        (cycles * self.total_duration, i, local)
    }

    /// Kilobits delivered over `[t0, t0 + duration]`.
    pub fn capacity_between(&self, t0: f64, duration: f64) -> f64 {
        if duration <= 0.0 {
            return 0.0;
        }
        let cycle = self.cycle_capacity();
        let full = (duration / self.total_duration).floor();
        let mut remaining = duration - full * self.total_duration;
        let mut total = full * cycle;
        let (_, mut i, mut local) = self.locate(t0);
        while remaining > 0.0 {
            let end = self.end_of(i);
            let span = (end - local).min(remaining);
            total += self.samples[i].kbps * span;
            remaining -= span;
            i += 1;
            if i == self.samples.len() {
                i = 0;
            }
            local = self.samples[i].start;
        }
        total
    }

    /// Time needed to receive `kilobits` starting at `t0`.
    pub fn download_time(&self, t0: f64, kilobits: f64) -> Result<f64, TraceError> {
        if !(kilobits.is_finite() && kilobits > 0.0) {
            return Err(TraceError::Invalid(format!(
                "download size must be positive, got {kilobits}"
            )));
        }
        let cycle = self.cycle_capacity();
        if cycle <= 0.0 {
            return Err(TraceError::ZeroCapacity);
        }
        let (_, mut i, mut local) = self.locate(t0);
        let mut remaining = kilobits;
        let mut elapsed = 0.0;
        // Skip whole cycles, keeping the phase.
        let full = ((remaining / cycle).floor() - 1.0).max(0.0);
        remaining -= full * cycle;
        elapsed += full * self.total_duration;
        loop {
            let end = self.end_of(i);
            let span = end - local;
            let rate = self.samples[i].kbps;
            let chunk = rate * span;
            if rate > 0.0 && chunk >= remaining {
                return Ok(elapsed + remaining / rate);
            }
            remaining -= chunk;
            elapsed += span;
            i += 1;
            if i == self.samples.len() {
                i = 0;
            }
            local = self.samples[i].start;
        }
    }

    /// Canonical two-column text, readable by [`parse_trace`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            let _ = writeln!(out, "{} {}", s.start, s.kbps);
        }
        out
    }
}

/// Parses the canonical `<time_s> <throughput_kbps>` format. The last
/// sample lasts as long as the interval before it; a lone sample lasts 1 s.
pub fn parse_trace(text: &str) -> Result<Trace, TraceError> {
    let mut samples: Vec<Sample> = Vec::new();
    let mut first_line = 1;
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(TraceError::Parse {
                line,
                message: format!("expected `<time_s> <kbps>`, got {content:?}"),
            });
        }
        let number = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| TraceError::Parse {
                    line,
                    message: format!("invalid number {s:?}"),
                })
        };
        let start = number(fields[0])?;
        let kbps = number(fields[1])?;
        if kbps < 0.0 {
            return Err(TraceError::NegativeThroughput { line, value: kbps });
        }
        if let Some(prev) = samples.last() {
            if start <= prev.start {
                return Err(TraceError::NonMonotone { line, time: start });
            }
        } else {
            first_line = line;
        }
        samples.push(Sample { start, kbps });
    }
    if let Some(first) = samples.first() {
        if first.start != 0.0 {
            return Err(TraceError::Parse {
                line: first_line,
                message: format!("trace must start at time 0, got {}", first.start),
            });
        }
    }
    let duration = match samples.as_slice() {
        [] => return Err(TraceError::Empty),
        [_] => 1.0,
        [.., a, b] => b.start + (b.start - a.start),
    };
    Trace::new(samples, duration)
}

/// Column mapping for raw HSDPA logs. Columns are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HsdpaColumns {
    /// Millisecond timestamp column.
    pub ts_col: usize,
    /// Bytes received during the logging interval.
    pub bytes_col: usize,
    /// Fixed interval length; when `None` it is the gap to the next row
    /// (the last row reuses the previous gap, a single row gets 1000 ms).
    pub interval_ms: Option<f64>,
}

impl Default for HsdpaColumns {
    fn default() -> Self {
        HsdpaColumns {
            ts_col: 1,
            bytes_col: 4,
            interval_ms: None,
        }
    }
}

/// Converts a raw HSDPA-style log into a trace, rebasing time to 0.
pub fn convert_hsdpa(text: &str, columns: &HsdpaColumns) -> Result<Trace, TraceError> {
    let mut rows: Vec<(f64, f64)> = Vec::new();
    for (index, raw) in text.lines().enumerate() {
        let row = index + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        let field = |col: usize, what: &str| -> Result<f64, TraceError> {
            let s = fields.get(col).ok_or_else(|| TraceError::Convert {
                row,
                message: format!("missing {what} column {col}"),
            })?;
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| TraceError::Convert {
                    row,
                    message: format!("non-numeric {what} field {s:?}"),
                })
        };
        let ts = field(columns.ts_col, "timestamp")?;
        let bytes = field(columns.bytes_col, "bytes")?;
        if bytes < 0.0 {
            return Err(TraceError::Convert {
                row,
                message: format!("negative byte count {bytes}"),
            });
        }
        if let Some(&(prev, _)) = rows.last() {
            if ts <= prev {
                return Err(TraceError::Convert {
                    row,
                    message: format!("timestamp {ts} does not increase"),
                });
            }
        }
        rows.push((ts, bytes));
    }
    if rows.is_empty() {
        return Err(TraceError::Empty);
    }
    if let Some(ms) = columns.interval_ms {
        if !(ms.is_finite() && ms > 0.0) {
            return Err(TraceError::Invalid(format!("interval must be positive, got {ms}")));
        }
    }
    let t0 = rows[0].0;
    let mut samples = Vec::with_capacity(rows.len());
    let mut start = 0.0;
    for i in 0..rows.len() {
        let interval_ms = match columns.interval_ms {
            Some(ms) => ms,
            None if i + 1 < rows.len() => rows[i + 1].0 - rows[i].0,
            None if i > 0 => rows[i].0 - rows[i - 1].0,
            None => 1000.0,
        };
        let kbps = 8.0 * rows[i].1 / (interval_ms / 1000.0) / 1000.0;
        let sample_start = if columns.interval_ms.is_some() {
            start
        } else {
            (rows[i].0 - t0) / 1000.0
        };
        samples.push(Sample {
            start: sample_start,
            kbps,
        });
        start = sample_start + interval_ms / 1000.0;
    }
    Trace::new(samples, start)
}

/// Harmonic mean of the last `min(k, len)` samples.
pub fn predict_throughput(history: &[f64], k: usize) -> Result<f64, TraceError> {
    if history.is_empty() || k == 0 {
        return Err(TraceError::EmptyHistory);
    }
    let recent = &history[history.len().saturating_sub(k)..];
    let mut inverse = 0.0;
    for &x in recent {
        if !(x > 0.0 && x.is_finite()) {
            return Err(TraceError::NonPositiveSample(x));
        }
        inverse += 1.0 / x;
    }
    Ok(recent.len() as f64 / inverse)
}
