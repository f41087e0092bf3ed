//! Geometric prior losses over keypoints, deformations and head pose.
//!
//! These are evaluators only (no gradients). They double as sanity checks on
//! decoded streams: a decoded frame whose keypoints collapse together or
//! whose deformations blow up scores badly here.

use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

use crate::geometry::{wrap_angle, DeformationSet, EulerAngles, KeypointSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("affine map is singular (det {det:e})")]
    SingularTransform { det: f64 },
    #[error("keypoint sets differ in size: {left} vs {right}")]
    CountMismatch { left: usize, right: usize },
    #[error("invalid loss configuration: {0}")]
    InvalidConfig(&'static str),
}

/// Thresholds and weights for the geometric losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Squared-distance threshold below which a keypoint pair is penalized.
    pub distance_threshold: f64,
    /// Target mean keypoint depth.
    pub target_depth: f64,
    pub equivariance_weight: f64,
    pub keypoint_weight: f64,
    pub head_pose_weight: f64,
    pub deformation_weight: f64,
    /// Perceptual and adversarial weights; carried for completeness, never
    /// used by anything in this crate.
    pub perceptual_weight: f64,
    pub gan_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            distance_threshold: 0.1,
            target_depth: 0.33,
            equivariance_weight: 20.0,
            keypoint_weight: 10.0,
            head_pose_weight: 20.0,
            deformation_weight: 5.0,
            perceptual_weight: 10.0,
            gan_weight: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        if self.distance_threshold.is_nan() || self.distance_threshold <= 0.0 {
            return Err(LossError::InvalidConfig("distance threshold must be positive"));
        }
        let weights = [
            self.equivariance_weight,
            self.keypoint_weight,
            self.head_pose_weight,
            self.deformation_weight,
            self.perceptual_weight,
            self.gan_weight,
        ];
        if weights.iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(LossError::InvalidConfig("weights must be non-negative"));
        }
        Ok(())
    }
}

/// The keypoint prior split into its pieces.
///
/// The pair sum runs over all ordered pairs including `i == j`, so every
/// keypoint contributes a constant `distance_threshold` through its self
/// pair. `self_pairs` isolates that constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointPriorTerms {
    /// Sum over ordered pairs `i != j`.
    pub spread: f64,
    /// `K · distance_threshold` from the diagonal.
    pub self_pairs: f64,
    /// `|mean z − target_depth|`.
    pub depth: f64,
}

impl KeypointPriorTerms {
    pub fn total(&self) -> f64 {
        self.spread + self.self_pairs + self.depth
    }

    /// Loss with the constant diagonal offset removed.
    pub fn without_self_pairs(&self) -> f64 {
        self.spread + self.depth
    }
}

pub fn keypoint_prior_terms(kps: &KeypointSet, cfg: &LossConfig) -> KeypointPriorTerms {
    let pts = kps.points();
    let mut spread = 0.0;
    for (i, a) in pts.iter().enumerate() {
        for (j, b) in pts.iter().enumerate() {
            if i != j {
                spread += (cfg.distance_threshold - (a - b).norm_squared()).max(0.0);
            }
        }
    }
    let depth = if pts.is_empty() {
        0.0
    } else {
        let mean_z = pts.iter().map(|p| p.z).sum::<f64>() / pts.len() as f64;
        (mean_z - cfg.target_depth).abs()
    };
    KeypointPriorTerms {
        spread,
        self_pairs: pts.len() as f64 * cfg.distance_threshold.max(0.0),
        depth,
    }
}

/// `Σ_i Σ_j max(0, D_t − ‖x_i − x_j‖²) + |Z(x) − z_t|`, diagonal included.
pub fn keypoint_prior_loss(kps: &KeypointSet, cfg: &LossConfig) -> f64 {
    keypoint_prior_terms(kps, cfg).total()
}

/// L1 norm of the flattened deformations.
pub fn deformation_prior_loss(defs: &DeformationSet) -> f64 {
    defs.deltas().iter().map(|d| d.abs().sum()).sum()
}

/// Sum of wrapped absolute Euler angle differences.
pub fn head_pose_loss(estimate: &EulerAngles, reference: &EulerAngles) -> f64 {
    estimate
        .to_array()
        .iter()
        .zip(reference.to_array())
        .map(|(a, b)| wrap_angle(a - b).abs())
        .sum()
}

/// 2D affine map `y = A x + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine2 {
    pub linear: Matrix2<f64>,
    pub offset: Vector2<f64>,
}

impl Affine2 {
    pub fn new(linear: Matrix2<f64>, offset: Vector2<f64>) -> Self {
        Self { linear, offset }
    }

    pub fn identity() -> Self {
        Self::new(Matrix2::identity(), Vector2::zeros())
    }

    pub fn apply(&self, p: &Vector2<f64>) -> Vector2<f64> {
        self.linear * p + self.offset
    }

    pub fn inverse(&self) -> Result<Affine2, LossError> {
        let det = self.linear.determinant();
        match self.linear.try_inverse() {
            Some(inv) if det.abs() > 1e-9 => Ok(Affine2::new(inv, -(inv * self.offset))),
            _ => Err(LossError::SingularTransform { det }),
        }
    }
}

/// Drops z from a keypoint set.
pub fn project_xy(kps: &KeypointSet) -> Vec<Vector2<f64>> {
    kps.points().iter().map(|p| Vector2::new(p.x, p.y)).collect()
}

/// `Σ_k ‖x_k − T⁻¹(y_k)‖₁` over the xy projections of both sets.
pub fn equivariance_residual(
    kps: &KeypointSet,
    transformed: &KeypointSet,
    t: &Affine2,
) -> Result<f64, LossError> {
    if kps.len() != transformed.len() {
        return Err(LossError::CountMismatch { left: kps.len(), right: transformed.len() });
    }
    let inv = t.inverse()?;
    Ok(project_xy(kps)
        .iter()
        .zip(project_xy(transformed))
        .map(|(x, y)| (x - inv.apply(&y)).abs().sum())
        .sum())
}

/// Already-evaluated loss values to be weighted.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeometricLosses {
    pub equivariance: f64,
    pub keypoint_prior: f64,
    pub head_pose: f64,
    pub deformation_prior: f64,
}

impl GeometricLosses {
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            equivariance: self.equivariance * c,
            keypoint_prior: self.keypoint_prior * c,
            head_pose: self.head_pose * c,
            deformation_prior: self.deformation_prior * c,
        }
    }
}

pub fn combined_geometric_loss(parts: &GeometricLosses, cfg: &LossConfig) -> f64 {
    cfg.equivariance_weight * parts.equivariance
        + cfg.keypoint_weight * parts.keypoint_prior
        + cfg.head_pose_weight * parts.head_pose
        + cfg.deformation_weight * parts.deformation_prior
}
