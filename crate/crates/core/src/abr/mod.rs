//! Compilation of a bitrate-selection window into a QUBO.
//!
//! Bits `x[n][l]` select level `l` for window position `n`. The energy is
//!
//! * `-a * sum q(l) x[n][l]` (quality),
//! * `b * sum (sum_l q(l) x[n][l] - sum_l q(l) x[n-1][l])^2` (switching),
//! * `lambda_rebuf * (sum_l ceil(S/U) x[n][l] + sum_k 2^k s[n][k] - floor(M/U))^2`
//!   per position, so that the download fits the buffer budget `M`,
//! * `lambda_onehot * (sum_l x[n][l] - 1)^2` per position.
//!
//! Buffer budgets inside the window depend on earlier in-window choices,
//! which would make the constraint non-quadratic; they are forecast along a
//! reference plan and refined by re-solving.

mod build;
mod decode;
mod select;

pub use build::{
    add_squared_linear, assemble, assemble_with, build_onehot, build_quality_term,
    build_rebuffer_constraint, build_switch_term, build_window_model, forecast_buffers,
    plan_assignment, solve_window, AssembledWindow, RebufferRow,
};
pub use decode::{decode, Decoded};
pub use select::{
    oracle_forecast, qubo_abr_select, QuboFullHorizonPolicy, QuboPolicy, QuboSelection,
    DEFAULT_FULL_HORIZON_PASSES,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annealer::SolveError;
use crate::chain::{ChainGroup, ChainStructure};
use crate::ladder::BitrateLadder;
use crate::qubo::QuboError;
use crate::traces::TraceError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AbrError {
    #[error("invalid ABR config: {0}")]
    InvalidConfig(String),
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("bandwidth prediction must be positive, got {0}")]
    NonPositivePrediction(f64),
    #[error("buffer {buffer} s outside [0, {cap}] s")]
    BufferOutOfRange { buffer: f64, cap: f64 },
    #[error(transparent)]
    Qubo(#[from] QuboError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Weights and sizes of the window formulation. `None` penalties use the
/// defaults from [`AbrQuboConfig::penalties`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AbrQuboConfig {
    pub quality_weight: f64,
    pub switch_weight: f64,
    pub onehot_penalty: Option<f64>,
    pub rebuffer_penalty: Option<f64>,
    pub slack_bits: usize,
    pub window: usize,
    pub refine_iterations: usize,
}

impl Default for AbrQuboConfig {
    fn default() -> Self {
        AbrQuboConfig {
            quality_weight: 1.0,
            switch_weight: 1.0,
            onehot_penalty: None,
            rebuffer_penalty: None,
            slack_bits: 8,
            window: 5,
            refine_iterations: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penalties {
    pub onehot: f64,
    pub rebuffer: f64,
}

impl AbrQuboConfig {
    pub fn validate(&self) -> Result<(), AbrError> {
        let bad = |m: &str| Err(AbrError::InvalidConfig(m.to_string()));
        if !(self.quality_weight.is_finite() && self.quality_weight >= 0.0) {
            return bad("quality weight must be non-negative");
        }
        if !(self.switch_weight.is_finite() && self.switch_weight >= 0.0) {
            return bad("switch weight must be non-negative");
        }
        for p in [self.onehot_penalty, self.rebuffer_penalty].into_iter().flatten() {
            if !(p.is_finite() && p > 0.0) {
                return bad("penalty weights must be positive");
            }
        }
        if self.slack_bits == 0 || self.slack_bits > 30 {
            return bad("slack bits must be in 1..=30");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if self.refine_iterations == 0 {
            return bad("refine iterations must be at least 1");
        }
        Ok(())
    }

    /// `lambda_onehot = a q_max + 4 b q_max^2 + 1`, which exceeds what any
    /// segment can gain in quality and switching by breaking its row, and
    /// `lambda_rebuf = 2 lambda_onehot`, so a single quantization unit over
    /// budget costs more than a one-hot violation.
    pub fn penalties(&self, ladder: &BitrateLadder) -> Penalties {
        let q = ladder.max_abs_quality();
        let default_onehot =
            self.quality_weight * q + 4.0 * self.switch_weight * q * q + 1.0;
        let onehot = self.onehot_penalty.unwrap_or(default_onehot);
        let rebuffer = self.rebuffer_penalty.unwrap_or(2.0 * onehot);
        Penalties { onehot, rebuffer }
    }

    /// Same formulation with every weight multiplied by `k`.
    pub fn scaled(&self, ladder: &BitrateLadder, k: f64) -> Self {
        let p = self.penalties(ladder);
        AbrQuboConfig {
            quality_weight: self.quality_weight * k,
            switch_weight: self.switch_weight * k,
            onehot_penalty: Some(p.onehot * k),
            rebuffer_penalty: Some(p.rebuffer * k),
            ..self.clone()
        }
    }
}

/// One optimization window of segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbrWindow {
    pub segment_duration: f64,
    pub buffer_cap: f64,
    /// `sizes[n][l]` in kilobits.
    pub sizes: Vec<Vec<f64>>,
    /// Quality of the last committed segment.
    pub prev_quality: Option<f64>,
}

impl AbrWindow {
    /// Sizes of `bitrate * segment_duration` at every position.
    pub fn uniform(
        ladder: &BitrateLadder,
        segments: usize,
        segment_duration: f64,
        buffer_cap: f64,
        prev_quality: Option<f64>,
    ) -> Self {
        let row: Vec<f64> = (0..ladder.len())
            .map(|l| ladder.segment_kilobits(l, segment_duration))
            .collect();
        AbrWindow {
            segment_duration,
            buffer_cap,
            sizes: vec![row; segments],
            prev_quality,
        }
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn levels(&self) -> usize {
        self.sizes.first().map_or(0, Vec::len)
    }

    pub fn min_size(&self, n: usize) -> f64 {
        self.sizes[n].iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self, ladder: &BitrateLadder) -> Result<(), AbrError> {
        let bad = |m: String| Err(AbrError::InvalidWindow(m));
        if self.sizes.is_empty() {
            return bad("window has no segments".into());
        }
        for (n, row) in self.sizes.iter().enumerate() {
            if row.len() != ladder.len() {
                return bad(format!("position {n} has {} sizes for {} levels", row.len(), ladder.len()));
            }
            if row.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return bad(format!("position {n} has a non-positive size"));
            }
        }
        if !(self.segment_duration > 0.0 && self.buffer_cap >= self.segment_duration) {
            return bad("segment duration and buffer cap are inconsistent".into());
        }
        Ok(())
    }
}

/// Forecast buffer levels and per-position download budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferForecast {
    /// Seconds of buffer when position `n` starts downloading.
    pub buffers: Vec<f64>,
    /// Kilobits that can arrive before the buffer runs dry.
    pub budgets: Vec<u64>,
    /// Whether the smallest level fits the budget.
    pub feasible: Vec<bool>,
}

impl BufferForecast {
    pub fn new(buffers: Vec<f64>, budgets: Vec<u64>, window: &AbrWindow) -> Self {
        let feasible = budgets
            .iter()
            .enumerate()
            .map(|(n, &m)| m as f64 >= window.min_size(n))
            .collect();
        BufferForecast {
            buffers,
            budgets,
            feasible,
        }
    }

    pub fn all_feasible(&self) -> bool {
        self.feasible.iter().all(|&f| f)
    }
}

/// Bit numbering: selection bits row-major by segment, then slack bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableLayout {
    pub segments: usize,
    pub levels: usize,
    pub slack_bits: usize,
}

pub fn layout_variables(segments: usize, levels: usize, slack_bits: usize) -> VariableLayout {
    VariableLayout {
        segments,
        levels,
        slack_bits,
    }
}

impl VariableLayout {
    /// 0-based position `n`, level `l`.
    pub fn selection(&self, n: usize, l: usize) -> usize {
        debug_assert!(n < self.segments && l < self.levels);
        n * self.levels + l
    }

    pub fn slack(&self, n: usize, k: usize) -> usize {
        debug_assert!(n < self.segments && k < self.slack_bits);
        self.segments * self.levels + n * self.slack_bits + k
    }

    pub fn num_bits(&self) -> usize {
        self.segments * (self.levels + self.slack_bits)
    }

    /// One group per position: level bits are primary, slack bits private.
    pub fn chain_structure(&self) -> ChainStructure {
        ChainStructure::new(
            (0..self.segments)
                .map(|n| ChainGroup {
                    primary: (0..self.levels).map(|l| self.selection(n, l)).collect(),
                    private: (0..self.slack_bits).map(|k| self.slack(n, k)).collect(),
                })
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_row_major() {
        let layout = layout_variables(2, 3, 4);
        assert_eq!(layout.num_bits(), 14);
        // second segment, first level
        assert_eq!(layout.selection(1, 0), 3);
        assert_eq!(layout.selection(0, 0), 0);
        assert_eq!(layout.slack(0, 0), 6);
        assert_eq!(layout.slack(1, 3), 13);
        assert_eq!(layout_variables(1, 1, 1).num_bits(), 2);
    }

    #[test]
    fn layout_indices_are_a_bijection() {
        let layout = layout_variables(3, 4, 5);
        let mut seen = vec![false; layout.num_bits()];
        for n in 0..3 {
            for l in 0..4 {
                assert!(!std::mem::replace(&mut seen[layout.selection(n, l)], true));
            }
            for k in 0..5 {
                assert!(!std::mem::replace(&mut seen[layout.slack(n, k)], true));
            }
        }
        assert!(seen.into_iter().all(|s| s));
    }

    #[test]
    fn default_penalties() {
        let ladder = BitrateLadder::default();
        let p = AbrQuboConfig::default().penalties(&ladder);
        assert!((p.onehot - (4.3 + 4.0 * 4.3 * 4.3 + 1.0)).abs() < 1e-12);
        assert_eq!(p.rebuffer, 2.0 * p.onehot);
    }

    #[test]
    fn config_validation() {
        let ok = AbrQuboConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            AbrQuboConfig { quality_weight: -1.0, ..ok.clone() },
            AbrQuboConfig { onehot_penalty: Some(0.0), ..ok.clone() },
            AbrQuboConfig { slack_bits: 0, ..ok.clone() },
            AbrQuboConfig { window: 0, ..ok.clone() },
            AbrQuboConfig { refine_iterations: 0, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
