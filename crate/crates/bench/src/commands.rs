//! Subcommand implementations. Each returns a [`Report`]; the binary only
//! parses flags and prints.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use kpcodec::codec::{
    build_frequency_tables, choose_adaptive_k, quantize_frame_with_report, AdaptivePolicy,
    FrequencyTableSet, PayloadMode, QuantizedFrame, ResidualTables,
};
use kpcodec::geometry::{compose_keypoints, wrap_angle, CanonicalGeometry, DeformationSet, KeypointSet, Vec3};
use kpcodec::protocol::{
    FrameOutput, LoopbackTransport, ReceiverState, SenderState, SessionTables, Transport, PACKET_HEADER_LEN,
};

use crate::recording::{read_recording, write_recording};
use crate::report::Report;
use crate::trajectory::{generate, MotionSample, Trajectory, TrajectorySpec};
use crate::BenchError;

/// Frame resolution used for bits-per-pixel accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolution {
    pub width: u32,
    pub height: u32,
}

impl Default for Resolution {
    fn default() -> Self {
        Self { width: 512, height: 512 }
    }
}

impl std::str::FromStr for Resolution {
    type Err = String;

    /// `512` for a square frame or `WxH`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |v: &str| v.trim().parse::<u32>().ok().filter(|&n| n > 0);
        let (w, h) = match s.split_once(['x', 'X']) {
            Some((w, h)) => (parse(w), parse(h)),
            None => (parse(s), parse(s)),
        };
        match (w, h) {
            (Some(width), Some(height)) => Ok(Self { width, height }),
            _ => Err(format!("invalid resolution '{s}', expected N or WxH")),
        }
    }
}

pub fn policy_name(p: AdaptivePolicy) -> String {
    match p {
        AdaptivePolicy::Fixed => "fixed".into(),
        AdaptivePolicy::Budget(b) => format!("budget:{b}"),
        AdaptivePolicy::Magnitude => "magnitude".into(),
    }
}

fn quantize_trajectory(t: &Trajectory, policy: AdaptivePolicy) -> Result<Vec<QuantizedFrame>, BenchError> {
    t.samples
        .iter()
        .map(|s| {
            let k = choose_adaptive_k(&s.deformations, policy)?;
            Ok(quantize_frame_with_report(&s.pose, &s.deformations, k)?.0)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// calibrate / generate

pub struct CalibrateArgs {
    pub specs: Vec<TrajectorySpec>,
    pub inputs: Vec<PathBuf>,
    pub policy: AdaptivePolicy,
    pub output: PathBuf,
}

pub fn calibrate(args: &CalibrateArgs) -> Result<Report, BenchError> {
    if args.specs.is_empty() && args.inputs.is_empty() {
        return Err(BenchError::Invalid("calibration needs at least one trajectory or recording".into()));
    }
    let mut frames = Vec::new();
    for spec in &args.specs {
        frames.extend(quantize_trajectory(&generate(spec)?, args.policy)?);
    }
    for path in &args.inputs {
        frames.extend(read_recording(path)?);
    }
    if frames.is_empty() {
        return Err(BenchError::Invalid("calibration input contains no frames".into()));
    }
    let k_max = args
        .specs
        .iter()
        .map(|s| s.keypoints)
        .chain(frames.iter().map(|f| f.k_eff()))
        .max()
        .unwrap_or(1);
    let tables = build_frequency_tables(&frames, k_max)?;
    tables.write_to(BufWriter::new(File::create(&args.output)?))?;

    let entropies: Vec<f64> = (0..tables.table_count()).map(|p| tables.observed_entropy(p)).collect();
    let total: f64 = entropies.iter().sum();
    let mut report = Report::new();
    report
        .push("calibrate.frames", frames.len())
        .push("calibrate.trajectories", args.specs.len())
        .push("calibrate.recordings", args.inputs.len())
        .push("calibrate.policy", policy_name(args.policy))
        .push("tables.k_max", tables.k_max())
        .push("tables.positions", tables.table_count())
        .push("tables.checksum", format!("{:08x}", tables.checksum()))
        .push("entropy.frame_bits", total)
        .push("entropy.mean_bits", total / entropies.len() as f64)
        .push("entropy.min_bits", entropies.iter().cloned().fold(f64::INFINITY, f64::min))
        .push("entropy.max_bits", entropies.iter().cloned().fold(0.0, f64::max));
    for (p, h) in entropies.iter().enumerate() {
        report.push(format!("entropy.position.{p:03}"), h);
    }
    Ok(report)
}

pub fn generate_recording(spec: &TrajectorySpec, policy: AdaptivePolicy, output: &Path) -> Result<Report, BenchError> {
    let frames = quantize_trajectory(&generate(spec)?, policy)?;
    write_recording(output, &frames)?;
    let octets: usize = frames.iter().map(|f| f.len()).sum();
    let mut report = Report::new();
    report
        .push("generate.frames", frames.len())
        .push("generate.keypoints", spec.keypoints)
        .push("generate.seed", spec.seed)
        .push("generate.policy", policy_name(policy))
        .push("generate.frame_octets_total", octets);
    Ok(report)
}

// ---------------------------------------------------------------------------
// streaming

pub struct StreamArgs {
    pub spec: TrajectorySpec,
    /// Calibration file; without one, tables are calibrated on the
    /// simulated trajectory itself.
    pub tables: Option<PathBuf>,
    pub policy: AdaptivePolicy,
    pub resolution: Resolution,
}

fn load_tables(args: &StreamArgs) -> Result<(FrequencyTableSet, &'static str), BenchError> {
    match &args.tables {
        Some(path) => Ok((FrequencyTableSet::read_from(BufReader::new(File::open(path)?))?, "file")),
        None => {
            let frames = quantize_trajectory(&generate(&args.spec)?, args.policy)?;
            Ok((build_frequency_tables(&frames, args.spec.keypoints)?, "matched"))
        }
    }
}

/// Per-frame record of one streamed frame.
struct FrameResult {
    k_eff: usize,
    raw_len: usize,
    payload_len: usize,
    raw_mode: bool,
    clamps: Vec<(usize, f64)>,
    received: KeypointSet,
}

struct Stream {
    tx: SenderState,
    rx: ReceiverState,
    wire: LoopbackTransport,
    packets: u64,
    geometry: CanonicalGeometry,
}

impl Stream {
    fn open(tables: FrequencyTableSet, trajectory: &Trajectory) -> Result<Self, BenchError> {
        let tables = SessionTables::new(tables, ResidualTables::uniform());
        let mut tx = SenderState::new(tables.clone());
        let mut rx = ReceiverState::new(tables);
        let mut wire = LoopbackTransport::new();
        let source = trajectory
            .samples
            .first()
            .ok_or_else(|| BenchError::Invalid("trajectory has no frames".into()))?;
        wire.send(&tx.table_sync())?;
        let init = tx.begin(trajectory.geometry.clone(), source.pose, source.deformations.clone(), Vec::new())?;
        wire.send(&init)?;
        while let Some(p) = wire.recv()? {
            rx.step(&p, None)?;
        }
        let geometry = tx.transmitted_session().expect("session just began").geometry.clone();
        Ok(Self { tx, rx, wire, packets: 2, geometry })
    }

    /// Sends one frame and runs the receiver on it. `flip_raw_bit` corrupts
    /// the mode bit of the packet while it is in flight.
    fn frame(
        &mut self,
        index: usize,
        s: &MotionSample,
        policy: AdaptivePolicy,
        flip_raw_bit: bool,
    ) -> Result<FrameResult, BenchError> {
        let at = |source| BenchError::Frame { index, source };
        let sent = self.tx.send_frame(&s.pose, &s.deformations, policy).map_err(at)?;
        self.wire.send(&sent.packet).map_err(at)?;
        self.packets += 1;
        if flip_raw_bit {
            self.wire.flip_bit(PACKET_HEADER_LEN, 7);
        }
        let packet = self.wire.recv().map_err(at)?.ok_or_else(|| BenchError::Invalid("wire drained".into()))?;
        match self.rx.step(&packet, None).map_err(at)? {
            FrameOutput::Motion(out) => Ok(FrameResult {
                k_eff: sent.k_eff,
                raw_len: sent.raw_len,
                payload_len: sent.packet.payload.len(),
                raw_mode: sent.mode == PayloadMode::Raw,
                clamps: sent.clamped.iter().map(|c| (c.component, c.value)).collect(),
                received: out.driving,
            }),
            other => Err(BenchError::Invalid(format!("frame {index}: unexpected receiver output {other:?}"))),
        }
    }
}

fn truncated(defs: &DeformationSet, k_eff: usize) -> DeformationSet {
    DeformationSet::new(
        defs.deltas().iter().enumerate().map(|(i, d)| if i < k_eff { *d } else { Vec3::zeros() }).collect(),
    )
    .expect("finite deformations")
}

pub fn simulate(args: &StreamArgs) -> Result<Report, BenchError> {
    args.spec.validate()?;
    let trajectory = generate(&args.spec)?;
    let (tables, table_source) = load_tables(args)?;
    let checksum = tables.checksum();
    let mut stream = Stream::open(tables, &trajectory)?;

    let (mut raw_total, mut payload_total, mut k_total) = (0u64, 0u64, 0u64);
    let (mut raw_frames, mut clamps) = (0u64, 0u64);
    let (mut max_err, mut max_tx_err) = (0.0f64, 0.0f64);
    for (i, s) in trajectory.samples.iter().enumerate() {
        let r = stream.frame(i, s, args.policy, false)?;
        raw_total += r.raw_len as u64;
        payload_total += r.payload_len as u64;
        k_total += r.k_eff as u64;
        raw_frames += r.raw_mode as u64;
        clamps += r.clamps.len() as u64;
        let ideal = compose_keypoints(&stream.geometry, &s.pose, &s.deformations).map_err(|e| BenchError::Frame {
            index: i,
            source: e.into(),
        })?;
        let sent = compose_keypoints(&stream.geometry, &s.pose, &truncated(&s.deformations, r.k_eff))
            .map_err(|e| BenchError::Frame { index: i, source: e.into() })?;
        max_err = max_err.max(r.received.max_point_error(&ideal));
        max_tx_err = max_tx_err.max(r.received.max_point_error(&sent));
    }
    let report = stream.rx.bandwidth_report(args.resolution.width, args.resolution.height)?;
    let counters = *stream.rx.counters();
    if counters != *stream.tx.counters() || counters.frames != payload_total {
        return Err(BenchError::Invalid("sender and receiver byte counters disagree".into()));
    }
    let frames = trajectory.samples.len() as f64;
    let mean_raw = raw_total as f64 / frames;
    let wire_expected = counters.init + counters.frames + counters.control + stream.packets * PACKET_HEADER_LEN as u64;

    let mut out = Report::new();
    run_header(&mut out, "simulate", args, table_source, checksum);
    out.push("measured.frames", trajectory.samples.len())
        .push("measured.resolution", format!("{}x{}", args.resolution.width, args.resolution.height))
        .push("measured.raw_bytes_total", raw_total)
        .push("measured.payload_bytes_total", payload_total)
        .push("measured.k_eff_total", k_total)
        .push("measured.mean_raw_bytes", mean_raw)
        .push("measured.mean_coded_bytes", report.mean_bytes_per_frame)
        .push("measured.mean_k_eff", k_total as f64 / frames)
        .push("measured.raw_fallback_frames", raw_frames)
        .push("measured.bpp", report.bpp)
        .push("measured.raw_to_coded_ratio", mean_raw / report.mean_bytes_per_frame)
        .push("measured.max_keypoint_error", max_err)
        .push("measured.max_transmitted_keypoint_error", max_tx_err)
        .push("measured.clamp_events", clamps)
        .push("measured.init_bytes", counters.init)
        .push("measured.control_bytes", counters.control)
        .push("measured.wire_bytes", stream.wire.octets_sent())
        .push("measured.wire_bytes_conserved", stream.wire.octets_sent() == wire_expected)
        .push("measured.note", "coded sizes include the 1-octet K_eff header; packet headers excluded");
    out.push_published();
    Ok(out)
}

fn run_header(out: &mut Report, command: &str, args: &StreamArgs, table_source: &str, checksum: u32) {
    let s = &args.spec;
    out.push("run.command", command)
        .push("run.frames", s.frames)
        .push("run.keypoints", s.keypoints)
        .push("run.seed", s.seed)
        .push("run.pose_amplitude", s.pose_amplitude)
        .push("run.deformation_amplitude", s.deformation_amplitude)
        .push("run.smoothness", s.smoothness)
        .push("run.policy", policy_name(args.policy))
        .push("tables.source", table_source)
        .push("tables.checksum", format!("{checksum:08x}"));
}

/// Largest rounding error of one binary16 conversion of `v`.
fn half_error_bound(v: f64) -> f64 {
    (v.abs() * 2f64.powi(-11)).max(2f64.powi(-25))
}

/// Per-coordinate bound on receiver keypoint error from half-precision
/// transport of pose and deformations. A rotation perturbed by angle errors
/// `e_j` moves a point `x` by at most `Σ e_j · |x|`.
fn keypoint_bound(s: &MotionSample, canon: &Vec3, delta: &Vec3, axis: usize) -> f64 {
    let a = s.pose.rotation.to_euler().angles;
    let angle_err: f64 = [wrap_angle(a.yaw), a.pitch, wrap_angle(a.roll)].iter().map(|&v| half_error_bound(v)).sum();
    angle_err * canon.norm() + half_error_bound(s.pose.translation[axis]) + half_error_bound(delta[axis]) + 1e-12
}

pub struct RoundtripOutcome {
    pub report: Report,
    pub passed: bool,
}

pub fn roundtrip_check(args: &StreamArgs, fault_frame: Option<usize>) -> Result<RoundtripOutcome, BenchError> {
    args.spec.validate()?;
    let trajectory = generate(&args.spec)?;
    let (tables, table_source) = load_tables(args)?;
    let checksum = tables.checksum();
    let mut stream = Stream::open(tables, &trajectory)?;
    if let Some(f) = fault_frame.filter(|&f| f >= trajectory.samples.len()) {
        return Err(BenchError::Invalid(format!("fault frame {f} beyond {} frames", trajectory.samples.len())));
    }

    let mut out = Report::new();
    run_header(&mut out, "roundtrip-check", args, table_source, checksum);
    out.push("roundtrip.fault_frame", fault_frame.map_or("none".to_string(), |f| f.to_string()));
    let (mut max_err, mut max_bound, mut worst_ratio) = (0.0f64, 0.0f64, 0.0f64);
    let mut failure: Option<(usize, String, String)> = None;
    let mut checked = 0usize;
    'frames: for (i, s) in trajectory.samples.iter().enumerate() {
        let r = match stream.frame(i, s, args.policy, fault_frame == Some(i)) {
            Ok(r) => r,
            Err(BenchError::Frame { index, source }) => {
                failure = Some((index, "packet".into(), format!("decode error: {source}")));
                break;
            }
            Err(e) => return Err(e),
        };
        if let Some(&(component, value)) = r.clamps.first() {
            failure = Some((
                i,
                format!("value.{component}"),
                format!("encoding error: {value} outside the ±2 quantization range (clamped)"),
            ));
            break;
        }
        let defs = truncated(&s.deformations, r.k_eff);
        let ideal = compose_keypoints(&stream.geometry, &s.pose, &defs)
            .map_err(|e| BenchError::Frame { index: i, source: e.into() })?;
        for (k, (got, want)) in r.received.points().iter().zip(ideal.points()).enumerate() {
            for axis in 0..3 {
                let err = (got[axis] - want[axis]).abs();
                let bound = keypoint_bound(s, &stream.geometry.keypoints()[k], &defs.deltas()[k], axis);
                max_err = max_err.max(err);
                max_bound = max_bound.max(bound);
                worst_ratio = worst_ratio.max(err / bound);
                if err > bound {
                    failure = Some((
                        i,
                        format!("keypoint.{k}.{}", ["x", "y", "z"][axis]),
                        format!("error {err} exceeds half-precision bound {bound}"),
                    ));
                    break 'frames;
                }
            }
        }
        checked += 1;
    }
    out.push("roundtrip.frames_checked", checked)
        .push("roundtrip.max_error", max_err)
        .push("roundtrip.max_bound", max_bound)
        .push("roundtrip.worst_error_to_bound", worst_ratio);
    let passed = failure.is_none();
    match failure {
        None => {
            out.push("roundtrip.status", "pass");
        }
        Some((frame, component, reason)) => {
            out.push("roundtrip.status", "fail")
                .push("roundtrip.failure.frame", frame)
                .push("roundtrip.failure.component", component)
                .push("roundtrip.failure.reason", reason);
        }
    }
    Ok(RoundtripOutcome { report: out, passed })
}
