//! Reference bitrate policies and the brute-force offline optimum.

use serde::{Deserialize, Serialize};

use crate::ladder::BitrateLadder;
use crate::sim::{
    compute_qoe, simulate_session, AbrPolicy, FixedPlan, PlaybackState, PolicyContext, QoEReport,
    SessionConfig, SimError, DEFAULT_REBUFFER_WEIGHT,
};
use crate::traces::{predict_throughput, Trace, DEFAULT_PREDICTOR_WINDOW};
use crate::Error;

pub const MAX_MPC_SEQUENCES: u64 = 1_000_000;
pub const MAX_OFFLINE_SEGMENTS: usize = 10;
pub const MAX_OFFLINE_PLANS: u64 = 10_000_000;

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("{what}: {count} candidates exceed the limit of {limit}")]
    Capacity {
        what: &'static str,
        count: u64,
        limit: u64,
    },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// `L^n`, saturating at `u64::MAX`.
fn sequence_count(levels: usize, n: usize) -> u64 {
    (0..n).fold(1u64, |acc, _| acc.saturating_mul(levels as u64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BbaParams {
    pub reservoir: f64,
    pub cushion: f64,
}

impl Default for BbaParams {
    fn default() -> Self {
        BbaParams {
            reservoir: 5.0,
            cushion: 10.0,
        }
    }
}

impl BbaParams {
    pub fn validate(&self) -> Result<(), BaselineError> {
        if self.reservoir > 0.0 && self.cushion > 0.0 {
            Ok(())
        } else {
            Err(BaselineError::InvalidParams("reservoir and cushion must be positive".into()))
        }
    }
}

/// Buffer-based selection: lowest level inside the reservoir, highest above
/// the cushion, a linear bitrate map rounded down in between.
pub fn bba_select(buffer: f64, ladder: &BitrateLadder, params: &BbaParams) -> usize {
    if buffer <= params.reservoir {
        return 0;
    }
    if buffer >= params.reservoir + params.cushion {
        return ladder.highest();
    }
    let r_min = ladder.lowest_bitrate();
    let r_max = ladder.bitrate(ladder.highest());
    let target = r_min + (buffer - params.reservoir) / params.cushion * (r_max - r_min);
    ladder.highest_at_most(target)
}

/// Highest level with bitrate at most `safety * c_pred`, else the lowest.
pub fn rate_select(c_pred: f64, ladder: &BitrateLadder, safety: f64) -> usize {
    ladder.highest_at_most(safety * c_pred)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcParams {
    pub window: usize,
    pub switch_weight: f64,
    pub rebuffer_weight: f64,
    /// Samples in the harmonic-mean prediction.
    pub predictor_window: usize,
}

impl Default for MpcParams {
    fn default() -> Self {
        MpcParams {
            window: 5,
            switch_weight: 1.0,
            rebuffer_weight: DEFAULT_REBUFFER_WEIGHT,
            predictor_window: DEFAULT_PREDICTOR_WINDOW,
        }
    }
}

/// Scores a level sequence against predicted throughputs with the session
/// QoE: quality minus weighted stall minus absolute switching.
pub fn mpc_score(
    state: &PlaybackState,
    levels: &[usize],
    predictions: &[f64],
    ladder: &BitrateLadder,
    params: &MpcParams,
    segment_duration: f64,
    buffer_cap: f64,
) -> f64 {
    let mut buffer = state.buffer;
    let mut prev = state.last_level.map(|l| ladder.quality(l));
    let mut score = 0.0;
    for (&level, &c) in levels.iter().zip(predictions) {
        let idle = (buffer + segment_duration - buffer_cap).max(0.0);
        buffer -= idle;
        let download = ladder.segment_kilobits(level, segment_duration) / c;
        let stall = (download - buffer).max(0.0);
        buffer = ((buffer - download).max(0.0) + segment_duration).min(buffer_cap);
        let q = ladder.quality(level);
        score += q - params.rebuffer_weight * stall;
        if let Some(p) = prev {
            score -= params.switch_weight * (q - p).abs();
        }
        prev = Some(q);
    }
    score
}

/// Enumerates every level sequence over the predictions and returns the
/// first level of the best one; ties go to the lexicographically smallest
/// sequence.
pub fn mpc_select(
    state: &PlaybackState,
    predictions: &[f64],
    ladder: &BitrateLadder,
    params: &MpcParams,
    segment_duration: f64,
    buffer_cap: f64,
) -> Result<usize, BaselineError> {
    if predictions.is_empty() {
        return Err(BaselineError::InvalidParams("no throughput predictions".into()));
    }
    if predictions.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
        return Err(BaselineError::InvalidParams("predictions must be positive".into()));
    }
    let w = predictions.len();
    let count = sequence_count(ladder.len(), w);
    if count > MAX_MPC_SEQUENCES {
        return Err(BaselineError::Capacity {
            what: "MPC lookahead",
            count,
            limit: MAX_MPC_SEQUENCES,
        });
    }
    let mut seq = vec![0usize; w];
    let mut best = (f64::NEG_INFINITY, 0);
    loop {
        let s = mpc_score(state, &seq, predictions, ladder, params, segment_duration, buffer_cap);
        if s > best.0 {
            best = (s, seq[0]);
        }
        // odometer increment, last position fastest
        let Some(pos) = seq.iter().rposition(|&l| l + 1 < ladder.len()) else {
            break;
        };
        seq[pos] += 1;
        seq[pos + 1..].fill(0);
    }
    Ok(best.1)
}

/// Best plan by exhaustive simulation. The first segment is always played
/// at the lowest level, so only the remaining `N - 1` choices are varied.
pub fn offline_optimal(
    trace: &Trace,
    ladder: &BitrateLadder,
    config: &SessionConfig,
    rebuffer_weight: f64,
) -> Result<(Vec<usize>, QoEReport), BaselineError> {
    config.validate()?;
    let n = config.segments;
    let count = sequence_count(ladder.len(), n);
    if n > MAX_OFFLINE_SEGMENTS || count > MAX_OFFLINE_PLANS {
        return Err(BaselineError::Capacity {
            what: "offline enumeration",
            count,
            limit: MAX_OFFLINE_PLANS,
        });
    }
    let mut plan = vec![0usize; n];
    let mut best: Option<(Vec<usize>, QoEReport)> = None;
    loop {
        let mut policy = FixedPlan::new(plan.clone());
        let log = simulate_session(trace, &mut policy, ladder, config)?;
        let report = compute_qoe(&log, rebuffer_weight, ladder);
        if best.as_ref().is_none_or(|(_, b)| report.total > b.total) {
            best = Some((plan.clone(), report));
        }
        let Some(pos) = plan.iter().skip(1).rposition(|&l| l + 1 < ladder.len()) else {
            break;
        };
        let pos = pos + 1;
        plan[pos] += 1;
        plan[pos + 1..].fill(0);
    }
    Ok(best.expect("at least one plan is evaluated"))
}

#[derive(Debug, Clone, Default)]
pub struct BbaPolicy {
    pub params: BbaParams,
}

impl AbrPolicy for BbaPolicy {
    fn name(&self) -> String {
        "bba".into()
    }

    fn select(&mut self, ctx: &PolicyContext<'_>) -> Result<usize, Error> {
        Ok(bba_select(ctx.state.buffer, ctx.ladder, &self.params))
    }
}

#[derive(Debug, Clone)]
pub struct RatePolicy {
    pub safety: f64,
    pub predictor_window: usize,
}

impl Default for RatePolicy {
    fn default() -> Self {
        RatePolicy {
            safety: 1.0,
            predictor_window: DEFAULT_PREDICTOR_WINDOW,
        }
    }
}

impl AbrPolicy for RatePolicy {
    fn name(&self) -> String {
        "rate".into()
    }

    fn select(&mut self, ctx: &PolicyContext<'_>) -> Result<usize, Error> {
        let c = predict_throughput(ctx.history, self.predictor_window)?;
        Ok(rate_select(c, ctx.ladder, self.safety))
    }
}

/// MPC with a constant harmonic-mean prediction over the lookahead.
#[derive(Debug, Clone, Default)]
pub struct MpcPolicy {
    pub params: MpcParams,
}

impl AbrPolicy for MpcPolicy {
    fn name(&self) -> String {
        "mpc".into()
    }

    fn select(&mut self, ctx: &PolicyContext<'_>) -> Result<usize, Error> {
        let c = predict_throughput(ctx.history, self.params.predictor_window)?;
        let w = self.params.window.min(ctx.remaining_segments()).max(1);
        Ok(mpc_select(
            ctx.state,
            &vec![c; w],
            ctx.ladder,
            &self.params,
            ctx.config.segment_duration,
            ctx.config.buffer_cap,
        )?)
    }
}
