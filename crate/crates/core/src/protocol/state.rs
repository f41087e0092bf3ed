use std::sync::Arc;

use super::packet::{Packet, PacketType};
use super::session::{SessionInit, TableSync};
use super::ProtocolError;
use crate::codec::{
    choose_adaptive_k, dequantize_frame, entropy_decode, entropy_decode_residual, entropy_encode,
    entropy_encode_residual, pack_residual, quantize_frame_with_report, unpack_residual, AdaptivePolicy,
    BinaryLatent, ClampEvent, EncodedPayload, EncodedResidual, FrequencyTableSet, PayloadMode, ResidualTables,
};
use crate::geometry::{
    apply_view_offset, compose_keypoints, CanonicalGeometry, DeformationSet, KeypointSet, Pose,
};
use crate::reference::{PublishedPayload, PUBLISHED_PAYLOADS};

/// K_eff shares its header octet with the raw-mode flag.
pub const MAX_SESSION_KEYPOINTS: usize = 0x7F;

const RAW_FLAG: u8 = 0x80;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionPhase {
    Init,
    Streaming,
    Aborted,
}

/// Calibration tables shared, read-only, by every session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionTables {
    pub frame: FrequencyTableSet,
    pub residual: ResidualTables,
}

impl SessionTables {
    pub fn new(frame: FrequencyTableSet, residual: ResidualTables) -> Arc<Self> {
        Arc::new(Self { frame, residual })
    }

    pub fn sync(&self) -> TableSync {
        TableSync {
            frame_checksum: self.frame.checksum(),
            residual_checksum: self.residual.checksum(),
            k_max: self.frame.k_max() as u16,
        }
    }
}

/// Cumulative payload octets (packet headers excluded), split by kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ByteCounters {
    pub init: u64,
    pub frames: u64,
    pub residuals: u64,
    pub control: u64,
    pub frame_count: u64,
    pub residual_count: u64,
}

fn motion_payload(enc: &EncodedPayload) -> Vec<u8> {
    let flag = if enc.mode == PayloadMode::Raw { RAW_FLAG } else { 0 };
    let mut out = Vec::with_capacity(1 + enc.bytes.len());
    out.push(flag | enc.k_eff as u8);
    out.extend_from_slice(&enc.bytes);
    out
}

fn parse_motion_payload(payload: &[u8]) -> Result<EncodedPayload, ProtocolError> {
    let (&head, bytes) = payload
        .split_first()
        .ok_or_else(|| ProtocolError::Framing("empty MOTION_FRAME payload".into()))?;
    let mode = if head & RAW_FLAG != 0 { PayloadMode::Raw } else { PayloadMode::Coded };
    Ok(EncodedPayload { mode, k_eff: (head & !RAW_FLAG) as usize, bytes: bytes.to_vec() })
}

fn residual_payload(enc: &EncodedResidual) -> Vec<u8> {
    let mut out = Vec::with_capacity(1 + enc.bytes.len());
    out.push(match enc.mode {
        PayloadMode::Coded => 0,
        PayloadMode::Raw => 1,
    });
    out.extend_from_slice(&enc.bytes);
    out
}

fn parse_residual_payload(payload: &[u8]) -> Result<EncodedResidual, ProtocolError> {
    let (&mode, bytes) =
        payload.split_first().ok_or_else(|| ProtocolError::Framing("empty RESIDUAL payload".into()))?;
    let mode = match mode {
        0 => PayloadMode::Coded,
        1 => PayloadMode::Raw,
        m => return Err(ProtocolError::Framing(format!("unknown residual mode {m}"))),
    };
    Ok(EncodedResidual { mode, bytes: bytes.to_vec() })
}

/// One motion frame as handed to the transport, with its accounting.
#[derive(Debug, Clone)]
pub struct SentFrame {
    pub packet: Packet,
    pub frame_index: u64,
    pub k_eff: usize,
    pub raw_len: usize,
    pub mode: PayloadMode,
    /// Entropy-coded octets, excluding the K_eff header octet.
    pub bitstream_len: usize,
    pub clamped: Vec<ClampEvent>,
}

#[derive(Debug, Clone)]
pub struct SenderState {
    phase: SessionPhase,
    tables: Arc<SessionTables>,
    session: Option<SessionInit>,
    counters: ByteCounters,
}

impl SenderState {
    pub fn new(tables: Arc<SessionTables>) -> Self {
        Self { phase: SessionPhase::Init, tables, session: None, counters: ByteCounters::default() }
    }

    pub fn phase(&self) -> SessionPhase {
        self.phase
    }

    pub fn counters(&self) -> &ByteCounters {
        &self.counters
    }

    pub fn tables(&self) -> &Arc<SessionTables> {
        &self.tables
    }

    /// The session exactly as the receiver will parse it (fp32-rounded).
    pub fn transmitted_session(&self) -> Option<&SessionInit> {
        self.session.as_ref()
    }

    pub fn table_sync(&mut self) -> Packet {
        let payload = self.tables.sync().encode();
        self.counters.control += payload.len() as u64;
        Packet::new(PacketType::TableSync, payload)
    }

    /// Emits SESSION_INIT and moves to streaming. The init payload is
    /// counted apart from per-frame bandwidth.
    pub fn begin(
        &mut self,
        canon: CanonicalGeometry,
        source_pose: Pose,
        source_defs: DeformationSet,
        appearance: Vec<u8>,
    ) -> Result<Packet, ProtocolError> {
        if self.phase != SessionPhase::Init {
            return Err(ProtocolError::Phase { packet: PacketType::SessionInit, phase: self.phase });
        }
        let k = canon.len();
        if k > MAX_SESSION_KEYPOINTS || k > self.tables.frame.k_max() {
            return Err(ProtocolError::Setup(format!(
                "{k} keypoints exceed table coverage K_max {} (limit {MAX_SESSION_KEYPOINTS})",
                self.tables.frame.k_max()
            )));
        }
        let init = SessionInit::new(canon, source_pose, source_defs, appearance)?;
        let payload = init.encode();
        let transmitted = SessionInit::parse(&payload)?;
        self.counters.init += payload.len() as u64;
        self.session = Some(transmitted);
        self.phase = SessionPhase::Streaming;
        Ok(Packet::new(PacketType::SessionInit, payload))
    }

    pub fn send_frame(
        &mut self,
        pose: &Pose,
        defs: &DeformationSet,
        policy: AdaptivePolicy,
    ) -> Result<SentFrame, ProtocolError> {
        let session = match (&self.session, self.phase) {
            (Some(s), SessionPhase::Streaming) => s,
            _ => return Err(ProtocolError::Phase { packet: PacketType::MotionFrame, phase: self.phase }),
        };
        if defs.len() != session.keypoints() {
            return Err(ProtocolError::Setup(format!(
                "{} deformations for a {}-keypoint session",
                defs.len(),
                session.keypoints()
            )));
        }
        let k_eff = choose_adaptive_k(defs, policy).map_err(ProtocolError::Encode)?;
        let (qf, clamped) = quantize_frame_with_report(pose, defs, k_eff).map_err(ProtocolError::Encode)?;
        let enc = entropy_encode(&qf, &self.tables.frame).map_err(ProtocolError::Encode)?;
        let payload = motion_payload(&enc);

        let frame_index = self.counters.frame_count;
        self.counters.frames += payload.len() as u64;
        self.counters.frame_count += 1;
        Ok(SentFrame {
            frame_index,
            k_eff,
            raw_len: qf.len(),
            mode: enc.mode,
            bitstream_len: enc.bytes.len(),
            clamped,
            packet: Packet::new(PacketType::MotionFrame, payload),
        })
    }

    /// Sends a residual latent. When to do so is up to the caller.
    pub fn send_residual(&mut self, latent: &BinaryLatent) -> Result<Packet, ProtocolError> {
        if self.phase != SessionPhase::Streaming {
            return Err(ProtocolError::Phase { packet: PacketType::Residual, phase: self.phase });
        }
        let enc = entropy_encode_residual(&pack_residual(latent), &self.tables.residual)
            .map_err(ProtocolError::Encode)?;
        let payload = residual_payload(&enc);
        self.counters.residuals += payload.len() as u64;
        self.counters.residual_count += 1;
        Ok(Packet::new(PacketType::Residual, payload))
    }

    pub fn bandwidth_report(&self, width: u32, height: u32) -> Result<BandwidthReport, ProtocolError> {
        BandwidthReport::from_totals(self.counters.frame_count, self.counters.frames as f64, width, height)
    }
}

/// A decoded motion frame, ready for flow construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionOutput {
    pub frame_index: u64,
    pub k_eff: usize,
    /// Decoded pose with any view offset already applied.
    pub pose: Pose,
    /// Decoded deformations, zero past `k_eff`.
    pub deformations: DeformationSet,
    pub driving: KeypointSet,
    pub source: KeypointSet,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FrameOutput {
    TablesConfirmed,
    SessionStarted { source: KeypointSet, appearance: Vec<u8> },
    Motion(MotionOutput),
    /// Latent for the external residual decoder. The most recent
    /// reconstructed frame becomes the new source.
    Residual { latent: BinaryLatent, new_source: KeypointSet },
}

#[derive(Debug, Clone)]
pub struct ReceiverState {
    phase: SessionPhase,
    tables: Arc<SessionTables>,
    session: Option<SessionInit>,
    source: Option<KeypointSet>,
    last_driving: Option<KeypointSet>,
    counters: ByteCounters,
}

impl ReceiverState {
    pub fn new(tables: Arc<SessionTables>) -> Self {
        Self {
            phase: SessionPhase::Init,
            tables,
            session: None,
            source: None,
            last_driving: None,
            counters: ByteCounters::default(),
        }
    }

    pub fn phase(&self) -> SessionPhase {
        self.phase
    }

    pub fn counters(&self) -> &ByteCounters {
        &self.counters
    }

    pub fn source(&self) -> Option<&KeypointSet> {
        self.source.as_ref()
    }

    pub fn session(&self) -> Option<&SessionInit> {
        self.session.as_ref()
    }

    /// Handles one packet. Failed steps leave the state untouched, except
    /// a table mismatch, which aborts the session.
    pub fn step(&mut self, packet: &Packet, view_offset: Option<&Pose>) -> Result<FrameOutput, ProtocolError> {
        if self.phase == SessionPhase::Aborted {
            return Err(ProtocolError::Aborted);
        }
        let (kind, phase) = (packet.kind, self.phase);
        let phase_error = move || ProtocolError::Phase { packet: kind, phase };
        match (packet.kind, self.phase) {
            (PacketType::TableSync, _) => {
                let remote = TableSync::parse(&packet.payload)?;
                let local = self.tables.sync();
                if remote != local {
                    self.phase = SessionPhase::Aborted;
                    let (l, r) = if remote.frame_checksum != local.frame_checksum {
                        (local.frame_checksum, remote.frame_checksum)
                    } else {
                        (local.residual_checksum, remote.residual_checksum)
                    };
                    return Err(ProtocolError::TableMismatch { local: l, remote: r });
                }
                self.counters.control += packet.payload.len() as u64;
                Ok(FrameOutput::TablesConfirmed)
            }
            (PacketType::SessionInit, SessionPhase::Init) => {
                let init = SessionInit::parse(&packet.payload)?;
                let k = init.keypoints();
                if k > MAX_SESSION_KEYPOINTS || k > self.tables.frame.k_max() {
                    return Err(ProtocolError::Setup(format!(
                        "{k} keypoints exceed table coverage K_max {}",
                        self.tables.frame.k_max()
                    )));
                }
                let source = compose_keypoints(&init.geometry, &init.source_pose, &init.source_deformations)?;
                let out = FrameOutput::SessionStarted { source: source.clone(), appearance: init.appearance.clone() };
                self.counters.init += packet.payload.len() as u64;
                self.session = Some(init);
                self.source = Some(source);
                self.phase = SessionPhase::Streaming;
                Ok(out)
            }
            (PacketType::MotionFrame, SessionPhase::Streaming) => {
                let session = self.session.as_ref().ok_or_else(phase_error)?;
                let enc = parse_motion_payload(&packet.payload)?;
                if enc.k_eff == 0 || enc.k_eff > session.keypoints() {
                    return Err(ProtocolError::Framing(format!(
                        "K_eff {} outside 1..={}",
                        enc.k_eff,
                        session.keypoints()
                    )));
                }
                let qf = entropy_decode(&enc, &self.tables.frame).map_err(ProtocolError::Decode)?;
                let (pose, defs, k_eff) = dequantize_frame(&qf)
                    .and_then(|d| d.into_parts(session.keypoints()))
                    .map_err(ProtocolError::Decode)?;
                let driving_natural = compose_keypoints(&session.geometry, &pose, &defs)?;
                let (pose, driving) = match view_offset {
                    Some(offset) => {
                        let pose = apply_view_offset(&pose, offset);
                        let kp = compose_keypoints(&session.geometry, &pose, &defs)?;
                        (pose, kp)
                    }
                    None => (pose, driving_natural.clone()),
                };
                let source = self.source.clone().ok_or_else(phase_error)?;

                let frame_index = self.counters.frame_count;
                self.counters.frames += packet.payload.len() as u64;
                self.counters.frame_count += 1;
                self.last_driving = Some(driving_natural);
                Ok(FrameOutput::Motion(MotionOutput { frame_index, k_eff, pose, deformations: defs, driving, source }))
            }
            (PacketType::Residual, SessionPhase::Streaming) => {
                let enc = parse_residual_payload(&packet.payload)?;
                let packed = entropy_decode_residual(&enc, &self.tables.residual).map_err(ProtocolError::Decode)?;
                let latent = unpack_residual(&packed).map_err(ProtocolError::Decode)?;
                let new_source = match &self.last_driving {
                    Some(kp) => kp.clone(),
                    None => self.source.clone().ok_or_else(phase_error)?,
                };
                self.counters.residuals += packet.payload.len() as u64;
                self.counters.residual_count += 1;
                self.source = Some(new_source.clone());
                Ok(FrameOutput::Residual { latent, new_source })
            }
            _ => Err(phase_error()),
        }
    }

    pub fn bandwidth_report(&self, width: u32, height: u32) -> Result<BandwidthReport, ProtocolError> {
        BandwidthReport::from_totals(self.counters.frame_count, self.counters.frames as f64, width, height)
    }
}

/// Per-frame bandwidth at a given resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthReport {
    pub frames: u64,
    pub total_payload_bytes: f64,
    pub mean_bytes_per_frame: f64,
    pub width: u32,
    pub height: u32,
    /// `mean_bytes_per_frame · 8 / (width · height)`.
    pub bpp: f64,
}

impl BandwidthReport {
    /// `total_payload_bytes` may be fractional when rebuilding a report
    /// from a published mean.
    pub fn from_totals(frames: u64, total_payload_bytes: f64, width: u32, height: u32) -> Result<Self, ProtocolError> {
        if frames == 0 {
            return Err(ProtocolError::Report("no frames sent"));
        }
        if width == 0 || height == 0 {
            return Err(ProtocolError::Report("zero resolution"));
        }
        if total_payload_bytes.is_nan() || total_payload_bytes < 0.0 {
            return Err(ProtocolError::Report("negative byte total"));
        }
        let mean = total_payload_bytes / frames as f64;
        Ok(Self {
            frames,
            total_payload_bytes,
            mean_bytes_per_frame: mean,
            width,
            height,
            bpp: mean * 8.0 / (width as f64 * height as f64),
        })
    }

    /// Published per-frame sizes for comparison tables.
    pub fn published_baselines(&self) -> &'static [PublishedPayload] {
        &PUBLISHED_PAYLOADS
    }
}
