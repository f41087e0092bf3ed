use half::f16;
use kpcodec::codec::{
    build_frequency_tables, choose_adaptive_k, dequantize_frame, entropy_decode, entropy_decode_residual,
    entropy_encode, entropy_encode_residual, frame_len, min_keypoints, pack_residual, quantize_frame,
    unpack_residual, AdaptivePolicy, BinaryLatent, FrequencyTableSet, QuantizedFrame, ResidualTables, LATENT_BITS,
    LINEAR_LIMIT,
};
use kpcodec::geometry::{wrap_angle, DeformationSet, EulerAngles, Pose, Vec3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

/// Largest rounding error of a value of magnitude `v`: half a unit in the
/// last place, which is `2^-11` relative for normal halves.
fn half_bound(v: f64) -> f64 {
    (v.abs() * 2f64.powi(-11)).max(2f64.powi(-25))
}

fn table_strategy() -> impl Strategy<Value = FrequencyTableSet> {
    (any::<u64>(), 1usize..6).prop_map(|(seed, hot)| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let counts = (0..frame_len(8))
            .map(|_| {
                let mut c = [1u64; 256];
                for _ in 0..hot {
                    c[r.random_range(0..256)] += r.random_range(1..50_000);
                }
                c
            })
            .collect();
        FrequencyTableSet::from_counts(8, counts).unwrap()
    })
}

proptest! {
    #[test]
    fn quantization_error_within_half_bound(
        yaw in -3.0..3.0f64, pitch in -1.5..1.5f64, roll in -3.0..3.0f64,
        t in vec3(LINEAR_LIMIT), d in prop::collection::vec(vec3(LINEAR_LIMIT), 1..10),
    ) {
        let pose = Pose::from_euler(EulerAngles::new(yaw, pitch, roll), t);
        let angles = pose.rotation.to_euler().angles;
        let defs = DeformationSet::new(d.clone()).unwrap();
        let back = dequantize_frame(&quantize_frame(&pose, &defs, d.len()).unwrap()).unwrap();
        for (got, want) in back.angles.to_array().iter().zip(angles.to_array()) {
            let want = wrap_angle(want);
            prop_assert!((got - want).abs() <= half_bound(want));
        }
        for i in 0..3 {
            prop_assert!((back.translation[i] - t[i]).abs() <= half_bound(t[i]));
        }
        for (got, want) in back.deformations.iter().zip(&d) {
            for i in 0..3 {
                prop_assert!((got[i] - want[i]).abs() <= half_bound(want[i]));
            }
        }
    }

    #[test]
    fn coder_is_lossless_on_any_octets(tables in table_strategy(), k in 1usize..=8, seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let qf = QuantizedFrame::from_bytes((0..frame_len(k)).map(|_| r.random()).collect()).unwrap();
        let enc = entropy_encode(&qf, &tables).unwrap();
        prop_assert!(enc.len() <= qf.len());
        prop_assert_eq!(entropy_decode(&enc, &tables).unwrap(), qf);
    }

    #[test]
    fn adaptive_choice_respects_floor_and_budget(
        d in prop::collection::vec(vec3(1.0), 4..40), budget_extra in 0usize..300,
    ) {
        let k = d.len();
        let defs = DeformationSet::new(d).unwrap();
        let floor = min_keypoints(k);
        let m = choose_adaptive_k(&defs, AdaptivePolicy::Magnitude).unwrap();
        prop_assert!(m >= floor && m <= k);
        let budget = frame_len(floor) + budget_extra;
        let b = choose_adaptive_k(&defs, AdaptivePolicy::Budget(budget)).unwrap();
        prop_assert!(b >= floor && b <= k);
        prop_assert!(frame_len(b) <= budget);
        prop_assert!(b == k || frame_len(b + 1) > budget);
    }

    #[test]
    fn residual_roundtrip(seed in any::<u64>(), density in 0.0..1.0f64) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let latent = BinaryLatent::new((0..LATENT_BITS).map(|_| r.random::<f64>() < density).collect()).unwrap();
        let packed = pack_residual(&latent);
        prop_assert_eq!(unpack_residual(&packed).unwrap(), latent);
        let tables = ResidualTables::build([packed.as_slice()]).unwrap();
        let enc = entropy_encode_residual(&packed, &tables).unwrap();
        prop_assert_eq!(entropy_decode_residual(&enc, &tables).unwrap(), packed);
    }
}

/// Frames of `len` octets where each position keeps its dominant symbol with
/// probability `p`, otherwise a uniform other symbol.
fn dominant_frames(r: &mut ChaCha8Rng, dominant: &[u8], p: f64, n: usize) -> Vec<QuantizedFrame> {
    (0..n)
        .map(|_| {
            let bytes = dominant
                .iter()
                .map(|&d| if r.random::<f64>() < p { d } else { d.wrapping_add(r.random_range(1..=255)) })
                .collect();
            QuantizedFrame::from_bytes(bytes).unwrap()
        })
        .collect()
}

#[test]
fn lower_entropy_never_costs_more() {
    let mut r = ChaCha8Rng::seed_from_u64(11);
    let len = frame_len(20);
    let dominant: Vec<u8> = (0..len).map(|_| r.random()).collect();
    let calib = dominant_frames(&mut r, &dominant, 0.9, 20_000);
    let tables = build_frequency_tables(&calib, 20).unwrap();
    let mut previous = f64::INFINITY;
    for p in [0.5, 0.7, 0.8, 0.9, 0.95, 0.99, 1.0] {
        let test = dominant_frames(&mut r, &dominant, p, 2_000);
        let mean = test.iter().map(|f| entropy_encode(f, &tables).unwrap().len()).sum::<usize>() as f64 / 2_000.0;
        assert!(mean <= previous + 4.0, "p={p}: {mean} after {previous}");
        previous = mean;
    }
}

#[test]
fn sparse_residuals_compress() {
    let mut r = ChaCha8Rng::seed_from_u64(12);
    let draw = |r: &mut ChaCha8Rng| {
        pack_residual(&BinaryLatent::new((0..LATENT_BITS).map(|_| r.random::<f64>() < 0.1).collect()).unwrap())
    };
    let calib: Vec<Vec<u8>> = (0..8).map(|_| draw(&mut r)).collect();
    let tables = ResidualTables::build(calib.iter().map(|v| v.as_slice())).unwrap();
    let packed = draw(&mut r);
    let enc = entropy_encode_residual(&packed, &tables).unwrap();
    // H(0.1) = 0.469 bits per latent bit
    let bound = LATENT_BITS as f64 * 0.469 / 8.0;
    assert!((enc.bytes.len() as f64) < 1.05 * bound + 4.0, "{} vs {bound}", enc.bytes.len());
}

#[test]
fn half_layout_is_little_endian() {
    let pose = Pose::from_euler(EulerAngles::new(1.0, 0.0, 0.0), Vec3::new(0.5, 0.0, -2.0));
    let qf = quantize_frame(&pose, &DeformationSet::zeros(1), 1).unwrap();
    assert_eq!(&qf.as_bytes()[..2], &f16::from_f64(1.0).to_le_bytes());
    assert_eq!(&qf.as_bytes()[6..8], &f16::from_f64(0.5).to_le_bytes());
    assert_eq!(&qf.as_bytes()[10..12], &[0x00, 0xC0]);
}
