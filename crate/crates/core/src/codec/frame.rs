use std::f64::consts::PI;

use half::f16;

use super::CodecError;
use crate::geometry::{euler_to_matrix, wrap_angle, DeformationSet, EulerAngles, Pose, Vec3};

/// Rotation (3) plus translation (3).
pub const POSE_VALUES: usize = 6;

/// Translations and deformations are clamped to `[-LINEAR_LIMIT, LINEAR_LIMIT]`.
pub const LINEAR_LIMIT: f64 = 2.0;

/// Angles live in `(-ANGLE_LIMIT, ANGLE_LIMIT]`.
pub const ANGLE_LIMIT: f64 = PI;

/// Raw frame size in octets for `k_eff` keypoints: `6 k_eff + 12`.
pub const fn frame_len(k_eff: usize) -> usize {
    2 * (POSE_VALUES + 3 * k_eff)
}

/// Inverse of [`frame_len`]; `None` when no positive keypoint count fits.
pub fn keypoints_for_len(len: usize) -> Option<usize> {
    let body = len.checked_sub(frame_len(0))?;
    (body % 6 == 0 && body > 0).then_some(body / 6)
}

/// Rounds through half precision.
pub fn half_round(v: f64) -> f64 {
    f16::from_f64(v).to_f64()
}

/// A value that fell outside its clamp range during quantization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampEvent {
    pub component: usize,
    pub value: f64,
}

/// `6 K_eff + 12` octets of little-endian half floats laid out as
/// `[yaw, pitch, roll, tx, ty, tz, δ1x, δ1y, δ1z, ...]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QuantizedFrame {
    bytes: Vec<u8>,
}

impl QuantizedFrame {
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self, CodecError> {
        keypoints_for_len(bytes.len()).ok_or(CodecError::Framing { len: bytes.len() })?;
        Ok(Self { bytes })
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn k_eff(&self) -> usize {
        (self.bytes.len() - frame_len(0)) / 6
    }

    pub fn values(&self) -> impl Iterator<Item = f16> + '_ {
        self.bytes.chunks_exact(2).map(|c| f16::from_le_bytes([c[0], c[1]]))
    }

    /// First component that is non-finite or outside its clamp range.
    ///
    /// Decoding with the wrong tables almost always trips this.
    pub fn sanity_check(&self) -> Result<(), usize> {
        for (i, v) in self.values().enumerate() {
            let v = v.to_f64();
            let limit = if i < 3 { ANGLE_LIMIT } else { LINEAR_LIMIT };
            if !v.is_finite() || v.abs() > limit {
                return Err(i);
            }
        }
        Ok(())
    }
}

/// Like [`quantize_frame`] but returns every clamped component.
pub fn quantize_frame_with_report(
    pose: &Pose,
    defs: &DeformationSet,
    k_eff: usize,
) -> Result<(QuantizedFrame, Vec<ClampEvent>), CodecError> {
    if k_eff == 0 || k_eff > defs.len() {
        return Err(CodecError::KeypointRange { k_eff, available: defs.len() });
    }
    let extraction = pose.rotation.to_euler();
    if extraction.gimbal_locked {
        log::debug!("pose at gimbal lock; roll folded into yaw");
    }

    let mut values = Vec::with_capacity(POSE_VALUES + 3 * k_eff);
    values.extend(extraction.angles.to_array());
    values.extend(pose.translation.iter());
    for d in &defs.deltas()[..k_eff] {
        values.extend(d.iter());
    }

    let mut clamped = Vec::new();
    let mut bytes = Vec::with_capacity(frame_len(k_eff));
    for (component, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(CodecError::NonFinite { component });
        }
        let q = if component < 3 {
            wrap_angle(v)
        } else if v.abs() > LINEAR_LIMIT {
            clamped.push(ClampEvent { component, value: v });
            v.clamp(-LINEAR_LIMIT, LINEAR_LIMIT)
        } else {
            v
        };
        bytes.extend_from_slice(&f16::from_f64(q).to_le_bytes());
    }
    for c in &clamped {
        log::warn!("frame component {} = {} clamped to ±{LINEAR_LIMIT}", c.component, c.value);
    }
    Ok((QuantizedFrame { bytes }, clamped))
}

/// Half-precision layout of the first `k_eff` keypoints of a frame.
/// Keypoints past `k_eff` are dropped from the tail.
pub fn quantize_frame(pose: &Pose, defs: &DeformationSet, k_eff: usize) -> Result<QuantizedFrame, CodecError> {
    quantize_frame_with_report(pose, defs, k_eff).map(|(qf, _)| qf)
}

/// Decoded frame values, still at half-precision resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct DequantizedFrame {
    pub angles: EulerAngles,
    pub translation: Vec3,
    /// The transmitted `k_eff` deformations.
    pub deformations: Vec<Vec3>,
}

impl DequantizedFrame {
    pub fn k_eff(&self) -> usize {
        self.deformations.len()
    }

    pub fn pose(&self) -> Pose {
        Pose::new(euler_to_matrix(self.angles), self.translation)
    }

    /// Deformations padded with zeros up to `k_total` keypoints.
    pub fn deformation_set(&self, k_total: usize) -> Result<DeformationSet, CodecError> {
        if self.k_eff() > k_total {
            return Err(CodecError::KeypointRange { k_eff: self.k_eff(), available: k_total });
        }
        let mut deltas = self.deformations.clone();
        deltas.resize(k_total, Vec3::zeros());
        DeformationSet::new(deltas).map_err(|_| CodecError::NonFinite { component: 0 })
    }

    /// `(pose, deformations padded to k_total, k_eff)`.
    pub fn into_parts(self, k_total: usize) -> Result<(Pose, DeformationSet, usize), CodecError> {
        let defs = self.deformation_set(k_total)?;
        Ok((self.pose(), defs, self.k_eff()))
    }
}

pub fn dequantize_frame(qf: &QuantizedFrame) -> Result<DequantizedFrame, CodecError> {
    let mut vals = Vec::with_capacity(qf.len() / 2);
    for (component, v) in qf.values().enumerate() {
        if !v.is_finite() {
            return Err(CodecError::InvalidHalf { component });
        }
        vals.push(v.to_f64());
    }
    let deformations = vals[POSE_VALUES..].chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
    Ok(DequantizedFrame {
        angles: EulerAngles::new(vals[0], vals[1], vals[2]),
        translation: Vec3::new(vals[3], vals[4], vals[5]),
        deformations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rotation;

    #[test]
    fn length_law() {
        assert_eq!(frame_len(20), 132);
        assert_eq!(frame_len(5), 42);
        assert_eq!(keypoints_for_len(132), Some(20));
        assert_eq!(keypoints_for_len(41), None);
        assert_eq!(keypoints_for_len(12), None);
        assert_eq!(keypoints_for_len(18), Some(1));
    }

    #[test]
    fn quantize_sizes_and_layout() {
        let pose = Pose::from_euler(EulerAngles::new(0.5, 0.0, 0.0), Vec3::new(1.0, 0.0, -0.25));
        let defs = DeformationSet::new((0..20).map(|i| Vec3::new(i as f64 / 64.0, 0.0, 0.0)).collect()).unwrap();
        let qf = quantize_frame(&pose, &defs, 20).unwrap();
        assert_eq!(qf.len(), 132);
        assert_eq!(&qf.as_bytes()[0..2], &f16::from_f64(0.5).to_le_bytes());
        assert_eq!(&qf.as_bytes()[6..8], &f16::from_f64(1.0).to_le_bytes());
        assert_eq!(&qf.as_bytes()[10..12], &f16::from_f64(-0.25).to_le_bytes());
        // δ_2x sits at value index 6 + 3
        assert_eq!(&qf.as_bytes()[18..20], &f16::from_f64(1.0 / 64.0).to_le_bytes());
        assert_eq!(quantize_frame(&pose, &defs, 5).unwrap().len(), 42);
        assert_eq!(quantize_frame(&pose, &defs, 5).unwrap().as_bytes(), &qf.as_bytes()[..42]);
    }

    #[test]
    fn zero_frame_decodes_to_identity() {
        let qf = QuantizedFrame::from_bytes(vec![0; 132]).unwrap();
        let (pose, defs, k) = dequantize_frame(&qf).unwrap().into_parts(20).unwrap();
        assert_eq!(k, 20);
        assert_eq!(pose, Pose::identity());
        assert_eq!(defs, DeformationSet::zeros(20));
    }

    #[test]
    fn missing_keypoints_are_zero() {
        let defs = DeformationSet::new(vec![Vec3::repeat(0.5); 8]).unwrap();
        let qf = quantize_frame(&Pose::identity(), &defs, 3).unwrap();
        let d = dequantize_frame(&qf).unwrap().deformation_set(8).unwrap();
        assert_eq!(&d.deltas()[..3], &[Vec3::repeat(0.5); 3]);
        assert_eq!(&d.deltas()[3..], &[Vec3::zeros(); 5]);
    }

    #[test]
    fn bad_lengths_and_values() {
        assert!(matches!(QuantizedFrame::from_bytes(vec![0; 41]), Err(CodecError::Framing { len: 41 })));
        let mut bytes = vec![0; 18];
        bytes[8..10].copy_from_slice(&f16::NAN.to_le_bytes());
        let qf = QuantizedFrame::from_bytes(bytes).unwrap();
        assert!(matches!(dequantize_frame(&qf), Err(CodecError::InvalidHalf { component: 4 })));
        assert_eq!(qf.sanity_check(), Err(4));
    }

    #[test]
    fn non_finite_and_range_errors() {
        let defs = DeformationSet::zeros(4);
        let pose = Pose::new(Rotation::identity(), Vec3::new(f64::INFINITY, 0.0, 0.0));
        assert!(matches!(quantize_frame(&pose, &defs, 4), Err(CodecError::NonFinite { component: 3 })));
        assert!(matches!(
            quantize_frame(&Pose::identity(), &defs, 5),
            Err(CodecError::KeypointRange { k_eff: 5, available: 4 })
        ));
        assert!(quantize_frame(&Pose::identity(), &defs, 0).is_err());
    }

    #[test]
    fn clamping_is_reported() {
        let defs = DeformationSet::new(vec![Vec3::new(0.0, 3.5, 0.0)]).unwrap();
        let pose = Pose::new(Rotation::identity(), Vec3::new(-2.5, 0.0, 0.0));
        let (qf, events) = quantize_frame_with_report(&pose, &defs, 1).unwrap();
        assert_eq!(events, vec![ClampEvent { component: 3, value: -2.5 }, ClampEvent { component: 7, value: 3.5 }]);
        let d = dequantize_frame(&qf).unwrap();
        assert_eq!(d.translation.x, -2.0);
        assert_eq!(d.deformations[0].y, 2.0);
        assert!(qf.sanity_check().is_ok());
    }
}
