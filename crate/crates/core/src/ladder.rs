//! Bitrate ladders and the per-level quality map `q(l)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default ladder in kbps.
pub const DEFAULT_LADDER_KBPS: [f64; 6] = [300.0, 750.0, 1200.0, 1850.0, 2850.0, 4300.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LadderError {
    #[error("a ladder needs at least 2 levels, got {0}")]
    TooFewLevels(usize),
    #[error("bitrates must be positive and strictly ascending")]
    NotAscending,
    #[error("quality values must be finite and strictly increasing")]
    QualityNotIncreasing,
    #[error("{bitrates} bitrates but {quality} quality values")]
    LengthMismatch { bitrates: usize, quality: usize },
}

/// How bitrates map to quality values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QualityMap {
    /// Bitrate in Mbps.
    #[default]
    Linear,
    /// `ln(R / R_min)`.
    Log,
}

impl QualityMap {
    pub fn apply(self, bitrates_kbps: &[f64]) -> Vec<f64> {
        let lowest = bitrates_kbps.first().copied().unwrap_or(1.0);
        bitrates_kbps
            .iter()
            .map(|&r| match self {
                QualityMap::Linear => r / 1000.0,
                QualityMap::Log => (r / lowest).ln(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitrateLadder {
    bitrates_kbps: Vec<f64>,
    quality: Vec<f64>,
}

impl BitrateLadder {
    pub fn new(bitrates_kbps: Vec<f64>, quality: Vec<f64>) -> Result<Self, LadderError> {
        if bitrates_kbps.len() < 2 {
            return Err(LadderError::TooFewLevels(bitrates_kbps.len()));
        }
        if bitrates_kbps.len() != quality.len() {
            return Err(LadderError::LengthMismatch {
                bitrates: bitrates_kbps.len(),
                quality: quality.len(),
            });
        }
        let ascending = bitrates_kbps.iter().all(|r| r.is_finite() && *r > 0.0)
            && bitrates_kbps.windows(2).all(|w| w[0] < w[1]);
        if !ascending {
            return Err(LadderError::NotAscending);
        }
        let increasing = quality.iter().all(|q| q.is_finite()) && quality.windows(2).all(|w| w[0] < w[1]);
        if !increasing {
            return Err(LadderError::QualityNotIncreasing);
        }
        Ok(BitrateLadder {
            bitrates_kbps,
            quality,
        })
    }

    pub fn with_map(bitrates_kbps: Vec<f64>, map: QualityMap) -> Result<Self, LadderError> {
        let quality = map.apply(&bitrates_kbps);
        BitrateLadder::new(bitrates_kbps, quality)
    }

    pub fn len(&self) -> usize {
        self.bitrates_kbps.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bitrate(&self, level: usize) -> f64 {
        self.bitrates_kbps[level]
    }

    pub fn bitrates(&self) -> &[f64] {
        &self.bitrates_kbps
    }

    pub fn quality(&self, level: usize) -> f64 {
        self.quality[level]
    }

    pub fn qualities(&self) -> &[f64] {
        &self.quality
    }

    pub fn highest(&self) -> usize {
        self.len() - 1
    }

    pub fn lowest_bitrate(&self) -> f64 {
        self.bitrates_kbps[0]
    }

    pub fn max_quality(&self) -> f64 {
        self.quality[self.highest()]
    }

    /// Largest |q| on the ladder; bounds single-segment objective terms.
    pub fn max_abs_quality(&self) -> f64 {
        self.quality.iter().fold(0.0_f64, |m, q| m.max(q.abs()))
    }

    /// Segment size in kilobits.
    pub fn segment_kilobits(&self, level: usize, segment_duration: f64) -> f64 {
        self.bitrates_kbps[level] * segment_duration
    }

    /// Highest level whose bitrate is at most `kbps`, or the lowest level.
    pub fn highest_at_most(&self, kbps: f64) -> usize {
        self.bitrates_kbps
            .iter()
            .rposition(|&r| r <= kbps)
            .unwrap_or(0)
    }
}

impl Default for BitrateLadder {
    fn default() -> Self {
        BitrateLadder::with_map(DEFAULT_LADDER_KBPS.to_vec(), QualityMap::Linear)
            .expect("default ladder is valid")
    }
}
