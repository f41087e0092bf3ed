//! Rotations, poses and the canonical/posed keypoint algebra.
//!
//! A posed keypoint is `R x_c + t + δ` and its Jacobian is `R J_c`.
//! Everything here is double precision; quantization happens in
//! [`crate::codec`].
//!
//! Euler angles follow the intrinsic yaw(z), pitch(y), roll(x) convention:
//! `R = Rz(yaw) · Ry(pitch) · Rx(roll)`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance used for validity checks (orthonormality, determinants).
pub const VALIDITY_TOLERANCE: f64 = 1e-6;

/// Minimum absolute Jacobian determinant accepted by [`CanonicalGeometry`].
pub const MIN_JACOBIAN_DET: f64 = 1e-6;

/// Default number of keypoints per identity.
pub const DEFAULT_KEYPOINTS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("matrix is not a proper rotation (orthonormality error {orthonormality:e}, det {det})")]
    NotARotation { orthonormality: f64, det: f64 },
    #[error("keypoint count mismatch: expected {expected}, got {actual}")]
    CountMismatch { expected: usize, actual: usize },
    #[error("geometry must contain at least one keypoint")]
    Empty,
    #[error("jacobian {index} is degenerate (det {det:e})")]
    DegenerateJacobian { index: usize, det: f64 },
    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    // rem_euclid maps -π to π already; guard the exact lower bound anyway
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerAngles {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl EulerAngles {
    pub const fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self { yaw, pitch, roll }
    }

    pub fn is_finite(&self) -> bool {
        self.yaw.is_finite() && self.pitch.is_finite() && self.roll.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.yaw, self.pitch, self.roll]
    }
}

/// Result of extracting Euler angles from a rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerExtraction {
    pub angles: EulerAngles,
    /// Set when pitch sits within [`VALIDITY_TOLERANCE`] of ±π/2. Roll is
    /// then reported as 0 and yaw carries the remaining free angle.
    pub gimbal_locked: bool,
}

/// A proper rotation matrix (RᵀR = I, det = +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    /// Validates `m` against the rotation invariants.
    pub fn new(m: Mat3) -> Result<Self, GeometryError> {
        let orthonormality = (m.transpose() * m - Mat3::identity()).abs().max();
        let det = m.determinant();
        if !orthonormality.is_finite()
            || orthonormality > VALIDITY_TOLERANCE
            || (det - 1.0).abs() > VALIDITY_TOLERANCE
        {
            return Err(GeometryError::NotARotation { orthonormality, det });
        }
        Ok(Self(m))
    }

    pub fn about_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn about_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn about_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    /// `self · rhs`.
    pub fn compose(&self, rhs: &Rotation) -> Self {
        Self(self.0 * rhs.0)
    }

    pub fn to_euler(&self) -> EulerExtraction {
        matrix_to_euler(self)
    }
}

/// Builds `Rz(yaw) · Ry(pitch) · Rx(roll)`.
pub fn euler_to_matrix(angles: EulerAngles) -> Rotation {
    let (sy, cy) = angles.yaw.sin_cos();
    let (sp, cp) = angles.pitch.sin_cos();
    let (sr, cr) = angles.roll.sin_cos();
    Rotation(Mat3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    ))
}

pub fn matrix_to_euler(r: &Rotation) -> EulerExtraction {
    let m = r.matrix();
    let cos_pitch = m[(0, 0)].hypot(m[(1, 0)]);
    let pitch = (-m[(2, 0)]).atan2(cos_pitch);

    if FRAC_PI_2 - pitch.abs() < VALIDITY_TOLERANCE {
        // yaw ∓ roll is all that survives; pin roll to zero.
        let yaw = (-m[(0, 1)]).atan2(m[(1, 1)]);
        let pitch = FRAC_PI_2.copysign(pitch);
        return EulerExtraction {
            angles: EulerAngles::new(wrap_angle(yaw), pitch, 0.0),
            gimbal_locked: true,
        };
    }

    let yaw = m[(1, 0)].atan2(m[(0, 0)]);
    let roll = m[(2, 1)].atan2(m[(2, 2)]);
    EulerExtraction {
        angles: EulerAngles::new(wrap_angle(yaw), pitch, wrap_angle(roll)),
        gimbal_locked: false,
    }
}

/// Head pose: rotation plus translation, in normalized scene units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(Rotation::identity(), Vec3::zeros())
    }

    pub fn from_euler(angles: EulerAngles, translation: Vec3) -> Self {
        Self::new(euler_to_matrix(angles), translation)
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

/// Per-keypoint expression deformations.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationSet {
    deltas: Vec<Vec3>,
}

impl DeformationSet {
    pub fn new(deltas: Vec<Vec3>) -> Result<Self, GeometryError> {
        if let Some(index) = deltas.iter().position(|d| !d.iter().all(|v| v.is_finite())) {
            return Err(GeometryError::NonFinite { what: "deformation", index });
        }
        Ok(Self { deltas })
    }

    pub fn zeros(k: usize) -> Self {
        Self { deltas: vec![Vec3::zeros(); k] }
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    pub fn deltas(&self) -> &[Vec3] {
        &self.deltas
    }

    pub fn into_inner(self) -> Vec<Vec3> {
        self.deltas
    }
}

/// Identity-specific canonical keypoints and Jacobians.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalGeometry {
    keypoints: Vec<Vec3>,
    jacobians: Vec<Mat3>,
}

impl CanonicalGeometry {
    pub fn new(keypoints: Vec<Vec3>, jacobians: Vec<Mat3>) -> Result<Self, GeometryError> {
        if keypoints.is_empty() {
            return Err(GeometryError::Empty);
        }
        if keypoints.len() != jacobians.len() {
            return Err(GeometryError::CountMismatch {
                expected: keypoints.len(),
                actual: jacobians.len(),
            });
        }
        check_finite("canonical keypoint", &keypoints, &jacobians)?;
        for (index, j) in jacobians.iter().enumerate() {
            let det = j.determinant();
            if det.abs() <= MIN_JACOBIAN_DET {
                return Err(GeometryError::DegenerateJacobian { index, det });
            }
        }
        Ok(Self { keypoints, jacobians })
    }

    /// Same as [`CanonicalGeometry::new`] but also pins the keypoint count.
    pub fn with_count(
        k: usize,
        keypoints: Vec<Vec3>,
        jacobians: Vec<Mat3>,
    ) -> Result<Self, GeometryError> {
        if keypoints.len() != k {
            return Err(GeometryError::CountMismatch { expected: k, actual: keypoints.len() });
        }
        Self::new(keypoints, jacobians)
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    pub fn keypoints(&self) -> &[Vec3] {
        &self.keypoints
    }

    pub fn jacobians(&self) -> &[Mat3] {
        &self.jacobians
    }
}

/// A single keypoint with its local affine Jacobian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub point: Vec3,
    pub jacobian: Mat3,
}

/// Posed keypoints (source or driving side).
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSet {
    points: Vec<Vec3>,
    jacobians: Vec<Mat3>,
}

impl KeypointSet {
    pub fn new(points: Vec<Vec3>, jacobians: Vec<Mat3>) -> Result<Self, GeometryError> {
        if points.len() != jacobians.len() {
            return Err(GeometryError::CountMismatch {
                expected: points.len(),
                actual: jacobians.len(),
            });
        }
        check_finite("keypoint", &points, &jacobians)?;
        Ok(Self { points, jacobians })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn jacobians(&self) -> &[Mat3] {
        &self.jacobians
    }

    pub fn get(&self, k: usize) -> Option<Keypoint> {
        Some(Keypoint { point: *self.points.get(k)?, jacobian: *self.jacobians.get(k)? })
    }

    pub fn iter(&self) -> impl Iterator<Item = Keypoint> + '_ {
        self.points
            .iter()
            .zip(&self.jacobians)
            .map(|(&point, &jacobian)| Keypoint { point, jacobian })
    }

    /// Largest elementwise absolute difference between the two sets' points.
    pub fn max_point_error(&self, other: &KeypointSet) -> f64 {
        self.points
            .iter()
            .zip(&other.points)
            .map(|(a, b)| (a - b).abs().max())
            .fold(0.0, f64::max)
    }
}

fn check_finite(what: &'static str, points: &[Vec3], jacobians: &[Mat3]) -> Result<(), GeometryError> {
    let bad_point = points.iter().position(|p| !p.iter().all(|v| v.is_finite()));
    let bad_jac = jacobians.iter().position(|j| !j.iter().all(|v| v.is_finite()));
    match bad_point.or(bad_jac) {
        Some(index) => Err(GeometryError::NonFinite { what, index }),
        None => Ok(()),
    }
}

/// Applies pose and deformations to canonical geometry:
/// `x_k = R x_{c,k} + t + δ_k`, `J_k = R J_{c,k}`.
pub fn compose_keypoints(
    canon: &CanonicalGeometry,
    pose: &Pose,
    defs: &DeformationSet,
) -> Result<KeypointSet, GeometryError> {
    if defs.len() != canon.len() {
        return Err(GeometryError::CountMismatch { expected: canon.len(), actual: defs.len() });
    }
    let r = pose.rotation.matrix();
    let points = canon
        .keypoints()
        .iter()
        .zip(defs.deltas())
        .map(|(x, d)| r * x + pose.translation + d)
        .collect();
    let jacobians = canon.jacobians().iter().map(|j| r * j).collect();
    Ok(KeypointSet { points, jacobians })
}

/// Exact inverse of [`compose_keypoints`]:
/// `x_c = Rᵀ (x − t − δ)`, `J_c = Rᵀ J`.
pub fn recover_canonical(
    kps: &KeypointSet,
    pose: &Pose,
    defs: &DeformationSet,
) -> Result<CanonicalGeometry, GeometryError> {
    if defs.len() != kps.len() {
        return Err(GeometryError::CountMismatch { expected: kps.len(), actual: defs.len() });
    }
    let rt = pose.rotation.inverse();
    let rt = rt.matrix();
    let keypoints = kps
        .points()
        .iter()
        .zip(defs.deltas())
        .map(|(x, d)| rt * (x - pose.translation - d))
        .collect();
    let jacobians = kps.jacobians().iter().map(|j| rt * j).collect();
    CanonicalGeometry::new(keypoints, jacobians)
}

/// Receiver-side free-view offset: `R ← R_u R`, `t ← t_u + t`.
pub fn apply_view_offset(pose: &Pose, offset: &Pose) -> Pose {
    Pose {
        rotation: offset.rotation.compose(&pose.rotation),
        translation: offset.translation + pose.translation,
    }
}
