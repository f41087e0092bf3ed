//! SESSION_INIT and TABLE_SYNC payloads.
//!
//! SESSION_INIT, all little-endian:
//!
//! ```text
//! version u16 | K u16
//! K × (point 3×f32, jacobian 9×f32 row-major)
//! source yaw, pitch, roll 3×f32 | source translation 3×f32
//! K × source deformation 3×f32
//! blob_len u32 | blob
//! ```

use super::ProtocolError;
use crate::geometry::{CanonicalGeometry, DeformationSet, EulerAngles, Mat3, Pose, Vec3};

pub const PROTOCOL_VERSION: u16 = 1;

/// One-time session setup: the speaker's geometry and source-frame motion,
/// plus an opaque appearance blob for the renderer.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionInit {
    pub geometry: CanonicalGeometry,
    pub source_pose: Pose,
    pub source_deformations: DeformationSet,
    pub appearance: Vec<u8>,
}

impl SessionInit {
    pub fn new(
        geometry: CanonicalGeometry,
        source_pose: Pose,
        source_deformations: DeformationSet,
        appearance: Vec<u8>,
    ) -> Result<Self, ProtocolError> {
        if source_deformations.len() != geometry.len() {
            return Err(ProtocolError::Setup(format!(
                "{} source deformations for {} keypoints",
                source_deformations.len(),
                geometry.len()
            )));
        }
        if geometry.len() > u16::MAX as usize || appearance.len() > u32::MAX as usize {
            return Err(ProtocolError::Setup("session too large to encode".into()));
        }
        Ok(Self { geometry, source_pose, source_deformations, appearance })
    }

    pub fn keypoints(&self) -> usize {
        self.geometry.len()
    }

    /// Payload size for `k` keypoints and a blob of `blob_len` octets.
    pub const fn encoded_len(k: usize, blob_len: usize) -> usize {
        2 + 2 + k * 12 * 4 + 6 * 4 + k * 3 * 4 + 4 + blob_len
    }

    pub fn encode(&self) -> Vec<u8> {
        let k = self.keypoints();
        let mut out = Vec::with_capacity(Self::encoded_len(k, self.appearance.len()));
        out.extend_from_slice(&PROTOCOL_VERSION.to_le_bytes());
        out.extend_from_slice(&(k as u16).to_le_bytes());
        let put = |out: &mut Vec<u8>, v: f64| out.extend_from_slice(&(v as f32).to_le_bytes());
        for (p, j) in self.geometry.keypoints().iter().zip(self.geometry.jacobians()) {
            p.iter().for_each(|&v| put(&mut out, v));
            // nalgebra iterates column-major; the wire is row-major
            j.transpose().iter().for_each(|&v| put(&mut out, v));
        }
        let angles = self.source_pose.rotation.to_euler().angles;
        angles.to_array().iter().for_each(|&v| put(&mut out, v));
        self.source_pose.translation.iter().for_each(|&v| put(&mut out, v));
        for d in self.source_deformations.deltas() {
            d.iter().for_each(|&v| put(&mut out, v));
        }
        out.extend_from_slice(&(self.appearance.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.appearance);
        out
    }

    pub fn parse(payload: &[u8]) -> Result<Self, ProtocolError> {
        let mut r = Reader { buf: payload, pos: 0 };
        let version = r.u16()?;
        if version != PROTOCOL_VERSION {
            return Err(ProtocolError::Setup(format!("unsupported protocol version {version}")));
        }
        let k = r.u16()? as usize;
        let mut points = Vec::with_capacity(k);
        let mut jacobians = Vec::with_capacity(k);
        for _ in 0..k {
            points.push(r.vec3()?);
            let mut m = [0.0; 9];
            for v in &mut m {
                *v = r.f32()?;
            }
            jacobians.push(Mat3::from_row_slice(&m));
        }
        let angles = r.vec3()?;
        let translation = r.vec3()?;
        let deltas = (0..k).map(|_| r.vec3()).collect::<Result<Vec<_>, _>>()?;
        let blob_len = r.u32()? as usize;
        let appearance = r.take(blob_len)?.to_vec();
        if r.pos != payload.len() {
            return Err(ProtocolError::Framing(format!(
                "{} trailing octets after session init",
                payload.len() - r.pos
            )));
        }
        let geometry = CanonicalGeometry::new(points, jacobians)?;
        let source_pose = Pose::from_euler(EulerAngles::new(angles.x, angles.y, angles.z), translation);
        let source_deformations = DeformationSet::new(deltas)?;
        Self::new(geometry, source_pose, source_deformations, appearance)
    }
}

/// Checksums both endpoints compare before streaming.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableSync {
    pub frame_checksum: u32,
    pub residual_checksum: u32,
    pub k_max: u16,
}

impl TableSync {
    pub const LEN: usize = 10;

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::LEN);
        out.extend_from_slice(&self.frame_checksum.to_le_bytes());
        out.extend_from_slice(&self.residual_checksum.to_le_bytes());
        out.extend_from_slice(&self.k_max.to_le_bytes());
        out
    }

    pub fn parse(payload: &[u8]) -> Result<Self, ProtocolError> {
        if payload.len() != Self::LEN {
            return Err(ProtocolError::Framing(format!("TABLE_SYNC payload of {} octets", payload.len())));
        }
        Ok(Self {
            frame_checksum: u32::from_le_bytes(payload[0..4].try_into().expect("4 octets")),
            residual_checksum: u32::from_le_bytes(payload[4..8].try_into().expect("4 octets")),
            k_max: u16::from_le_bytes([payload[8], payload[9]]),
        })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ProtocolError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            ProtocolError::Framing("session init shorter than its declared layout".into())
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, ProtocolError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, ProtocolError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 octets")))
    }

    fn f32(&mut self) -> Result<f64, ProtocolError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 octets")) as f64)
    }

    fn vec3(&mut self) -> Result<Vec3, ProtocolError> {
        Ok(Vec3::new(self.f32()?, self.f32()?, self.f32()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rotation;

    fn init(k: usize, blob: Vec<u8>) -> SessionInit {
        let pts = (0..k).map(|i| Vec3::new(i as f64 * 0.125, -0.25, 0.5)).collect();
        let jac = (0..k).map(|i| Mat3::new(1.0, 0.5 * i as f64, 0.0, 0.0, 1.0, 0.0, 0.25, 0.0, 1.0)).collect();
        SessionInit::new(
            CanonicalGeometry::new(pts, jac).unwrap(),
            Pose::new(Rotation::about_z(0.5), Vec3::new(0.0, 0.25, 0.0)),
            DeformationSet::zeros(k),
            blob,
        )
        .unwrap()
    }

    #[test]
    fn layout_size() {
        assert_eq!(SessionInit::encoded_len(20, 0), 4 + 20 * 12 * 4 + 24 + 20 * 12 + 4);
        assert_eq!(init(20, vec![]).encode().len(), 1232);
        assert_eq!(init(20, vec![7; 100]).encode().len(), 1332);
    }

    #[test]
    fn parse_roundtrip_exact_on_f32_values() {
        let s = init(3, b"jpeg".to_vec());
        let bytes = s.encode();
        let back = SessionInit::parse(&bytes).unwrap();
        // every value above is f32-representable except the rotation
        assert_eq!(back.geometry, s.geometry);
        assert_eq!(back.appearance, b"jpeg");
        assert!((back.source_pose.rotation.matrix() - s.source_pose.rotation.matrix()).abs().max() < 1e-6);
        assert_eq!(back.encode(), bytes);
    }

    #[test]
    fn jacobian_is_row_major_on_wire() {
        let s = init(2, vec![]);
        let bytes = s.encode();
        // keypoint 1 jacobian starts after version, K, kp0 (48 B) and kp1's point
        let off = 4 + 48 + 12;
        let j01 = f32::from_le_bytes(bytes[off + 4..off + 8].try_into().unwrap());
        let j20 = f32::from_le_bytes(bytes[off + 24..off + 28].try_into().unwrap());
        assert_eq!(j01, 0.5);
        assert_eq!(j20, 0.25);
    }

    #[test]
    fn malformed_payloads() {
        let bytes = init(2, vec![1, 2]).encode();
        assert!(matches!(SessionInit::parse(&bytes[..bytes.len() - 1]), Err(ProtocolError::Framing(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(SessionInit::parse(&extra).is_err());
        let mut version = bytes.clone();
        version[0] = 9;
        assert!(matches!(SessionInit::parse(&version), Err(ProtocolError::Setup(_))));
        // zero a jacobian: geometry invariant must fail after parse
        let mut degenerate = bytes;
        for b in &mut degenerate[4 + 12..4 + 48] {
            *b = 0;
        }
        assert!(matches!(SessionInit::parse(&degenerate), Err(ProtocolError::Geometry(_))));
    }

    #[test]
    fn table_sync_roundtrip() {
        let t = TableSync { frame_checksum: 0xDEADBEEF, residual_checksum: 7, k_max: 20 };
        assert_eq!(TableSync::parse(&t.encode()).unwrap(), t);
        assert!(TableSync::parse(&[0; 9]).is_err());
    }
}
