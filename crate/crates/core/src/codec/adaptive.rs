//! Per-frame choice of how many keypoint deformations to send.
//!
//! Keypoints are ordered by importance, so a frame always carries a prefix.
//! At most 75% of them may be dropped.

use super::frame::frame_len;
use super::CodecError;
use crate::geometry::DeformationSet;

/// Share of total deformation L1 mass the magnitude policy must keep.
pub const MAGNITUDE_COVERAGE: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdaptivePolicy {
    /// Always send every keypoint.
    #[default]
    Fixed,
    /// Largest prefix whose raw frame fits the octet budget.
    Budget(usize),
    /// Shortest prefix holding [`MAGNITUDE_COVERAGE`] of the deformation mass.
    Magnitude,
}

/// `⌈K / 4⌉`, the 75% dropout floor.
pub const fn min_keypoints(k: usize) -> usize {
    k.div_ceil(4)
}

pub fn choose_adaptive_k(defs: &DeformationSet, policy: AdaptivePolicy) -> Result<usize, CodecError> {
    let k = defs.len();
    if k == 0 {
        return Err(CodecError::KeypointRange { k_eff: 0, available: 0 });
    }
    let floor = min_keypoints(k);
    match policy {
        AdaptivePolicy::Fixed => Ok(k),
        _ if k < 4 => Err(CodecError::Configuration(format!(
            "adaptive keypoint selection needs K >= 4, got {k}"
        ))),
        AdaptivePolicy::Budget(budget) => {
            let minimum = frame_len(floor);
            if budget < minimum {
                return Err(CodecError::Budget { budget, minimum });
            }
            let fit = (budget - frame_len(0)) / 6;
            Ok(fit.clamp(floor, k))
        }
        AdaptivePolicy::Magnitude => {
            let mass: Vec<f64> = defs.deltas().iter().map(|d| d.abs().sum()).collect();
            let total: f64 = mass.iter().sum();
            if total == 0.0 {
                return Ok(floor);
            }
            let need = MAGNITUDE_COVERAGE * total;
            let mut acc = 0.0;
            for (i, m) in mass.iter().enumerate() {
                acc += m;
                // relative slack so an exactly-99% prefix is not lost to rounding
                if acc >= need * (1.0 - 1e-12) {
                    return Ok((i + 1).max(floor));
                }
            }
            Ok(k)
        }
    }
}
