//! Synthetic driving motion.
//!
//! Every pose component and deformation coordinate follows its own low-pass
//! filtered Gaussian walk, `y_t = a·y_{t-1} + (1 − a)·A·n_t`, started from
//! `y_0 = A·n_0`. At `a = 0` frames are independent noise; as `a → 1` the
//! trajectory freezes near its starting point.

use kpcodec::geometry::{CanonicalGeometry, DeformationSet, EulerAngles, Mat3, Pose, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::BenchError;

/// Pitch stays this far from ±π/2 so the Euler extraction is unambiguous.
const PITCH_LIMIT: f64 = std::f64::consts::FRAC_PI_2 - 0.05;

/// Deformation amplitude decays by this factor per keypoint index, so the
/// leading keypoints carry most of the motion.
const DEFORMATION_DECAY: f64 = 0.7;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySpec {
    pub frames: usize,
    pub keypoints: usize,
    pub seed: u64,
    /// Radians for the angles, normalized units for the translation.
    pub pose_amplitude: f64,
    pub deformation_amplitude: f64,
    /// Low-pass coefficient in `[0, 1)`.
    pub smoothness: f64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            frames: 300,
            keypoints: 20,
            seed: 0,
            pose_amplitude: 0.2,
            deformation_amplitude: 0.05,
            smoothness: 0.9,
        }
    }
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.keypoints == 0 {
            return Err(BenchError::Invalid("at least one keypoint is required".into()));
        }
        if !(self.pose_amplitude >= 0.0 && self.deformation_amplitude >= 0.0)
            || !self.pose_amplitude.is_finite()
            || !self.deformation_amplitude.is_finite()
        {
            return Err(BenchError::Invalid("amplitudes must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.smoothness) {
            return Err(BenchError::Invalid(format!("smoothness {} outside [0, 1)", self.smoothness)));
        }
        Ok(())
    }
}

/// One driving frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSample {
    pub pose: Pose,
    pub deformations: DeformationSet,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub geometry: CanonicalGeometry,
    pub samples: Vec<MotionSample>,
}

struct Walk {
    value: f64,
    amplitude: f64,
    a: f64,
}

impl Walk {
    fn new(r: &mut ChaCha8Rng, amplitude: f64, a: f64) -> Self {
        Self { value: amplitude * normal(r), amplitude, a }
    }

    fn step(&mut self, r: &mut ChaCha8Rng) -> f64 {
        // `+ 0.0` folds -0.0 into +0.0 so a static channel stays one symbol
        let out = self.value + 0.0;
        self.value = self.a * self.value + (1.0 - self.a) * self.amplitude * normal(r);
        out
    }
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

/// Seeded canonical geometry in the unit cube, Jacobians near identity.
pub fn canonical_geometry(seed: u64, k: usize) -> CanonicalGeometry {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x6b70_6765_6f6d);
    let points = (0..k)
        .map(|_| Vec3::new(r.random_range(-0.8..0.8), r.random_range(-0.8..0.8), r.random_range(0.1..0.6)))
        .collect();
    let jacobians = (0..k)
        .map(|_| Mat3::identity() + Mat3::from_fn(|_, _| r.random_range(-0.1..0.1)))
        .collect();
    CanonicalGeometry::new(points, jacobians).expect("near-identity jacobians are invertible")
}

pub fn generate(spec: &TrajectorySpec) -> Result<Trajectory, BenchError> {
    spec.validate()?;
    let mut r = ChaCha8Rng::seed_from_u64(spec.seed);
    let a = spec.smoothness;
    let mut pose: Vec<Walk> = (0..6).map(|_| Walk::new(&mut r, spec.pose_amplitude, a)).collect();
    let mut defs: Vec<Walk> = (0..3 * spec.keypoints)
        .map(|i| Walk::new(&mut r, spec.deformation_amplitude * DEFORMATION_DECAY.powi((i / 3) as i32), a))
        .collect();
    let samples = (0..spec.frames)
        .map(|_| {
            let p: Vec<f64> = pose.iter_mut().map(|w| w.step(&mut r)).collect();
            let d: Vec<f64> = defs.iter_mut().map(|w| w.step(&mut r)).collect();
            let angles = EulerAngles::new(p[0], p[1].clamp(-PITCH_LIMIT, PITCH_LIMIT), p[2]);
            MotionSample {
                pose: Pose::from_euler(angles, Vec3::new(p[3], p[4], p[5])),
                deformations: DeformationSet::new(d.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect())
                    .expect("finite walk values"),
            }
        })
        .collect();
    Ok(Trajectory { geometry: canonical_geometry(spec.seed, spec.keypoints), samples })
}
