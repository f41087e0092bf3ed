use kpcodec::geometry::{wrap_angle, DeformationSet, EulerAngles, KeypointSet, Mat3, Vec3};
use kpcodec::loss::{deformation_prior_loss, head_pose_loss, keypoint_prior_loss, LossConfig};
use proptest::prelude::*;
use std::f64::consts::PI;

fn points(k: usize) -> impl Strategy<Value = Vec<Vec3>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z)), k)
}

fn set(p: Vec<Vec3>) -> KeypointSet {
    let n = p.len();
    KeypointSet::new(p, vec![Mat3::identity(); n]).unwrap()
}

fn angles() -> impl Strategy<Value = EulerAngles> {
    (-4.0..4.0f64, -4.0..4.0f64, -4.0..4.0f64).prop_map(|(a, b, c)| EulerAngles::new(a, b, c))
}

proptest! {
    #[test]
    fn keypoint_prior_ignores_order(
        (pts, perm) in (1usize..12).prop_flat_map(|k| (points(k), Just((0..k).collect::<Vec<_>>()).prop_shuffle()))
    ) {
        let cfg = LossConfig::default();
        let shuffled: Vec<Vec3> = perm.iter().map(|&i| pts[i]).collect();
        let a = keypoint_prior_loss(&set(pts), &cfg);
        let b = keypoint_prior_loss(&set(shuffled), &cfg);
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn keypoint_prior_ignores_xy_translation(pts in points(8), dx in -3.0..3.0f64, dy in -3.0..3.0f64) {
        let cfg = LossConfig::default();
        let moved: Vec<Vec3> = pts.iter().map(|p| p + Vec3::new(dx, dy, 0.0)).collect();
        let a = keypoint_prior_loss(&set(pts), &cfg);
        let b = keypoint_prior_loss(&set(moved), &cfg);
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn deformation_prior_is_a_norm(a in points(10), b in points(10), c in -10.0..10.0f64) {
        let la = deformation_prior_loss(&DeformationSet::new(a.clone()).unwrap());
        let lb = deformation_prior_loss(&DeformationSet::new(b.clone()).unwrap());
        let sum: Vec<Vec3> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        prop_assert!(deformation_prior_loss(&DeformationSet::new(sum).unwrap()) <= la + lb + 1e-12);
        let scaled: Vec<Vec3> = a.iter().map(|x| x * c).collect();
        prop_assert!((deformation_prior_loss(&DeformationSet::new(scaled).unwrap()) - c.abs() * la).abs() < 1e-9);
        prop_assert!(la >= 0.0);
    }

    #[test]
    fn head_pose_loss_is_symmetric(a in angles(), b in angles()) {
        prop_assert!((head_pose_loss(&a, &b) - head_pose_loss(&b, &a)).abs() < 1e-12);
        prop_assert!(head_pose_loss(&a, &b) <= 3.0 * PI + 1e-12);
    }

    #[test]
    fn head_pose_loss_zero_only_on_wrapped_equality(a in angles(), turns in -2i32..=2) {
        let shifted = EulerAngles::new(a.yaw + 2.0 * PI * turns as f64, a.pitch, a.roll);
        prop_assert!(head_pose_loss(&a, &shifted) < 1e-9);
        let off = EulerAngles::new(a.yaw, a.pitch + 0.1, a.roll);
        prop_assert!(head_pose_loss(&a, &off) > 0.0);
        prop_assert!((head_pose_loss(&a, &off) - wrap_angle(0.1).abs()).abs() < 1e-9);
    }
}
