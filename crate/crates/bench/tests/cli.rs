use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use kpbench::recording::read_recording;

fn kpbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kpbench")).args(args).env("RUST_LOG", "off").output().expect("run kpbench")
}

fn ok(args: &[&str]) -> (String, BTreeMap<String, String>) {
    let out = kpbench(args);
    assert!(out.status.success(), "kpbench {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let map = text.lines().filter_map(|l| l.split_once('=')).map(|(k, v)| (k.into(), v.into())).collect();
    (text, map)
}

fn num(r: &BTreeMap<String, String>, key: &str) -> f64 {
    r.get(key).unwrap_or_else(|| panic!("missing {key}")).parse().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Per-position Shannon entropy of recorded frames, in bits per frame.
fn empirical_entropy_bits(path: &Path) -> f64 {
    let frames = read_recording(path).unwrap();
    let len = frames[0].len();
    assert!(frames.iter().all(|f| f.len() == len));
    (0..len)
        .map(|p| {
            let mut counts = [0usize; 256];
            for f in &frames {
                counts[f.as_bytes()[p] as usize] += 1;
            }
            let n = frames.len() as f64;
            counts.iter().filter(|&&c| c > 0).map(|&c| -(c as f64 / n) * (c as f64 / n).log2()).sum::<f64>()
        })
        .sum()
}

#[test]
fn fixed_policy_raw_size_is_132() {
    for seed in ["0", "7"] {
        let (_, r) = ok(&["simulate", "--frames", "50", "--seed", seed]);
        assert_eq!(r["measured.mean_raw_bytes"], "132");
        assert_eq!(num(&r, "measured.raw_bytes_total"), 50.0 * 132.0);
    }
}

#[test]
fn reports_are_deterministic() {
    let args = ["simulate", "--frames", "80", "--seed", "3", "--policy", "magnitude"];
    assert_eq!(ok(&args).0, ok(&args).0);
}

#[test]
fn report_arithmetic_recomputes_exactly() {
    let (_, r) = ok(&["simulate", "--frames", "120", "--policy", "budget", "--budget-bytes", "90", "--resolution", "640x480"]);
    let frames = num(&r, "measured.frames");
    let mean_coded = num(&r, "measured.payload_bytes_total") / frames;
    let mean_raw = num(&r, "measured.raw_bytes_total") / frames;
    assert_eq!(num(&r, "measured.mean_coded_bytes"), mean_coded);
    assert_eq!(num(&r, "measured.mean_raw_bytes"), mean_raw);
    assert_eq!(num(&r, "measured.mean_k_eff"), num(&r, "measured.k_eff_total") / frames);
    assert_eq!(num(&r, "measured.raw_to_coded_ratio"), mean_raw / mean_coded);
    let bpp = mean_coded * 8.0 / (640.0 * 480.0);
    assert!((num(&r, "measured.bpp") - bpp).abs() < 1e-9);
    // budget 90 fits 13 keypoints
    assert_eq!(num(&r, "measured.mean_raw_bytes"), 90.0);
    assert_eq!(r["measured.wire_bytes_conserved"], "true");
}

#[test]
fn published_and_measured_are_separate() {
    let (text, r) = ok(&["simulate", "--frames", "30"]);
    assert!(text.lines().all(|l| ["run.", "tables.", "measured.", "published."].iter().any(|p| l.starts_with(p))));
    assert_eq!(r["published.ours-20kp.raw_bytes"], "132");
    assert_eq!(r["published.ours-20kp.coded_bytes"], "84.44");
    assert_eq!(r["published.fs-vid2vid.raw_bytes"], "504");
    assert_eq!(r["published.FOMM.coded_bytes"], "171.09");
    assert_eq!(r["published.ours-adaptive.coded_bytes"], "53.03");
    assert_eq!(r["published.h264_crf36_ratio.ours-adaptive"], "10.37");
    assert_eq!(r["published.h264_crf36_ratio.ours-20kp"], "6.5");
    assert_ne!(r["measured.mean_coded_bytes"], r["published.ours-20kp.coded_bytes"]);
}

#[test]
fn smooth_motion_compresses_with_matched_tables() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("smooth.kpfr");
    let tables = dir.path().join("smooth.kpft");
    let common = ["--frames", "400", "--smoothness", "0.999", "--seed", "5"];
    ok(&[&["generate", "--output", path_str(&rec)], &common[..]].concat());
    ok(&["calibrate", "--no-trajectory", "--input", path_str(&rec), "--output", path_str(&tables)]);
    let (_, r) = ok(&[&["simulate", "--tables", path_str(&tables)], &common[..]].concat());

    let bound = empirical_entropy_bits(&rec) / 8.0;
    let raw = num(&r, "measured.mean_raw_bytes");
    let coded = num(&r, "measured.mean_coded_bytes");
    // the oracle already predicts the result: entropy + header + coder flush
    assert!(bound + 1.0 + 4.0 < 0.7 * raw, "entropy bound {bound}");
    assert!(coded < 0.7 * raw, "coded {coded} vs raw {raw}");
    assert!(coded >= bound - 1.0, "coded {coded} beats the entropy bound {bound}");

    // rough motion does not get there
    let (_, rough) = ok(&["simulate", "--frames", "400", "--smoothness", "0", "--seed", "5"]);
    assert!(num(&rough, "measured.mean_coded_bytes") > 0.7 * 132.0);
}

#[test]
fn calibration_is_deterministic_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.kpft");
    let b = dir.path().join("b.kpft");
    let c = dir.path().join("c.kpft");
    let (ra, _) = ok(&["calibrate", "--seed", "1", "--seed", "2", "--frames", "100", "--output", path_str(&a)]);
    let (rb, _) = ok(&["calibrate", "--seed", "1", "--seed", "2", "--frames", "100", "--output", path_str(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ra, rb);
    let (_, rc) = ok(&["calibrate", "--seed", "3", "--seed", "4", "--frames", "100", "--output", path_str(&c)]);
    let ma: BTreeMap<_, _> = ra.lines().filter_map(|l| l.split_once('=')).collect();
    assert_ne!(ma["tables.checksum"], rc["tables.checksum"]);
    assert_eq!(&std::fs::read(&a).unwrap()[..4], b"KPFT");
}

#[test]
fn constant_trajectory_has_near_zero_entropy() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("const.kpft");
    let (_, r) = ok(&[
        "calibrate", "--pose-amplitude", "0", "--deformation-amplitude", "0", "--frames", "200", "--output",
        path_str(&out),
    ]);
    assert!(num(&r, "entropy.max_bits") < 1e-9);
    assert_eq!(num(&r, "tables.positions"), 132.0);
    assert!(r.contains_key("entropy.position.131"));
}

#[test]
fn roundtrip_check_passes_by_default() {
    let (_, r) = ok(&["roundtrip-check", "--frames", "200"]);
    assert_eq!(r["roundtrip.status"], "pass");
    assert_eq!(num(&r, "roundtrip.frames_checked"), 200.0);
    assert!(num(&r, "roundtrip.worst_error_to_bound") <= 1.0);
}

#[test]
fn fault_injection_fails_at_the_flipped_frame() {
    for (policy, frame) in [("fixed", "40"), ("magnitude", "13")] {
        let out = kpbench(&["roundtrip-check", "--frames", "80", "--policy", policy, "--fault-inject", "--fault-frame", frame]);
        assert_eq!(out.status.code(), Some(1));
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("roundtrip.status=fail"));
        assert!(text.contains(&format!("roundtrip.failure.frame={frame}\n")), "{text}");
        assert!(text.contains("roundtrip.failure.reason=decode error"));
    }
    // default fault frame is the middle of the run
    let out = kpbench(&["roundtrip-check", "--frames", "60", "--fault-inject"]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("roundtrip.failure.frame=30\n"));
}

#[test]
fn clamp_probe_reports_an_encoding_error() {
    let out = kpbench(&["roundtrip-check", "--frames", "40", "--pose-amplitude", "3"]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("roundtrip.failure.reason=encoding error"), "{text}");
    assert!(text.contains("roundtrip.failure.component=value."));
}

#[test]
fn recordings_feed_calibration() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("r.kpfr");
    let tables = dir.path().join("r.kpft");
    let (_, g) = ok(&["generate", "--frames", "60", "--policy", "magnitude", "--output", path_str(&rec)]);
    assert_eq!(num(&g, "generate.frames"), 60.0);
    let frames = read_recording(&rec).unwrap();
    assert_eq!(frames.len(), 60);
    assert_eq!(frames.iter().map(|f| f.len()).sum::<usize>() as f64, num(&g, "generate.frame_octets_total"));
    let (_, c) = ok(&["calibrate", "--input", path_str(&rec), "--frames", "60", "--output", path_str(&tables)]);
    assert_eq!(num(&c, "calibrate.frames"), 120.0);
    let (_, s) = ok(&["simulate", "--frames", "60", "--tables", path_str(&tables)]);
    assert_eq!(s["tables.source"], "file");
    assert_eq!(s["tables.checksum"], c["tables.checksum"]);
}

#[test]
fn bad_invocations_exit_nonzero() {
    assert_eq!(kpbench(&["simulate", "--policy", "budget"]).status.code(), Some(2));
    assert_eq!(kpbench(&["simulate", "--budget-bytes", "60"]).status.code(), Some(2));
    assert_eq!(kpbench(&["simulate", "--smoothness", "1.0"]).status.code(), Some(2));
    assert_eq!(kpbench(&["simulate", "--tables", "/nonexistent/x.kpft"]).status.code(), Some(2));
    assert_eq!(kpbench(&["simulate", "--policy", "budget", "--budget-bytes", "10"]).status.code(), Some(2));
    assert!(!kpbench(&["simulate", "--resolution", "0x5"]).status.success());
    assert!(!kpbench(&["calibrate"]).status.success());
}
