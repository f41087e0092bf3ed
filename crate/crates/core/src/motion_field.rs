//! First-order backward flows and trilinear warping of 3D feature volumes.
//!
//! Coordinates are normalized to `[-1, 1]³`. A flow vector is `(x, y, z)`
//! where `x` runs along width, `y` along height and `z` along depth. Grid
//! index `i` of `n` sits at the cell centre `-1 + (2i + 1) / n`.
//!
//! For keypoint `k`, a driving-space point `p` maps back to source space as
//! `J_s J_d⁻¹ (p − x_d) + x_s`. The `K` candidate flows are blended per
//! voxel by a softmax mask and the result drives a backward warp that reads
//! zero outside the unit cube.

use nalgebra::Vector3;
use thiserror::Error;

use crate::geometry::{KeypointSet, Mat3, Vec3, MIN_JACOBIAN_DET};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("driving jacobian {index} is singular (det {det:e})")]
    SingularJacobian { index: usize, det: f64 },
    #[error("keypoint index {index} out of range for {len} keypoints")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("source has {source_len} keypoints but driving has {driving_len}")]
    KeypointCountMismatch { source_len: usize, driving_len: usize },
    #[error("at least one keypoint is required")]
    NoKeypoints,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("occlusion value {value} outside [0, 1]")]
    OcclusionRange { value: f64 },
}

/// Spatial extent of a volume or flow field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims3 {
    pub depth: usize,
    pub height: usize,
    pub width: usize,
}

impl Dims3 {
    pub const fn new(depth: usize, height: usize, width: usize) -> Self {
        Self { depth, height, width }
    }

    pub const fn voxels(&self) -> usize {
        self.depth * self.height * self.width
    }

    fn validate(&self) -> Result<(), FlowError> {
        if self.voxels() == 0 {
            return Err(FlowError::InvalidDims(format!("{self:?} has a zero extent")));
        }
        Ok(())
    }

    #[inline]
    pub fn index(&self, d: usize, h: usize, w: usize) -> usize {
        (d * self.height + h) * self.width + w
    }

    /// Normalized `(x, y, z)` coordinate of a voxel centre.
    #[inline]
    pub fn center(&self, d: usize, h: usize, w: usize) -> Vec3 {
        Vec3::new(
            cell_center(w, self.width),
            cell_center(h, self.height),
            cell_center(d, self.depth),
        )
    }
}

#[inline]
pub fn cell_center(i: usize, n: usize) -> f64 {
    -1.0 + (2 * i + 1) as f64 / n as f64
}

/// Inverse of [`cell_center`] on the continuous axis.
#[inline]
fn to_index_space(c: f64, n: usize) -> f64 {
    ((c + 1.0) * n as f64 - 1.0) / 2.0
}

/// Dense `C × D × H × W` feature volume, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVolume {
    channels: usize,
    dims: Dims3,
    values: Vec<f64>,
}

impl FeatureVolume {
    pub fn new(channels: usize, dims: Dims3, values: Vec<f64>) -> Result<Self, FlowError> {
        dims.validate()?;
        if channels == 0 {
            return Err(FlowError::InvalidDims("zero channels".into()));
        }
        if values.len() != channels * dims.voxels() {
            return Err(FlowError::DimensionMismatch(format!(
                "{} values for {channels} × {dims:?}",
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(FlowError::NonFinite("feature volume"));
        }
        Ok(Self { channels, dims, values })
    }

    pub fn zeros(channels: usize, dims: Dims3) -> Self {
        Self { channels, dims, values: vec![0.0; channels * dims.voxels()] }
    }

    pub fn from_fn(channels: usize, dims: Dims3, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(channels * dims.voxels());
        for c in 0..channels {
            for d in 0..dims.depth {
                for h in 0..dims.height {
                    for w in 0..dims.width {
                        values.push(f(c, d, h, w));
                    }
                }
            }
        }
        Self { channels, dims, values }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, c: usize, d: usize, h: usize, w: usize) -> f64 {
        self.values[c * self.dims.voxels() + self.dims.index(d, h, w)]
    }

    fn channel(&self, c: usize) -> &[f64] {
        let n = self.dims.voxels();
        &self.values[c * n..(c + 1) * n]
    }

    /// Trilinear sample of channel `c` at a normalized coordinate. Anything
    /// outside the unit cube reads zero, as do missing corner neighbours.
    pub fn sample(&self, c: usize, at: &Vec3) -> f64 {
        sample_channel(self.channel(c), self.dims, at)
    }
}

fn sample_channel(data: &[f64], dims: Dims3, at: &Vec3) -> f64 {
    if !at.iter().all(|v| (-1.0..=1.0).contains(v)) {
        return 0.0;
    }
    let u = to_index_space(at.x, dims.width);
    let v = to_index_space(at.y, dims.height);
    let s = to_index_space(at.z, dims.depth);
    let (w0, fw) = split(u);
    let (h0, fh) = split(v);
    let (d0, fd) = split(s);

    let tap = |d: i64, h: i64, w: i64| -> f64 {
        if d < 0 || h < 0 || w < 0 {
            return 0.0;
        }
        let (d, h, w) = (d as usize, h as usize, w as usize);
        if d >= dims.depth || h >= dims.height || w >= dims.width {
            return 0.0;
        }
        data[dims.index(d, h, w)]
    };

    let mut acc = 0.0;
    for (dd, wd) in [(0, 1.0 - fd), (1, fd)] {
        if wd == 0.0 {
            continue;
        }
        for (dh, wh) in [(0, 1.0 - fh), (1, fh)] {
            if wh == 0.0 {
                continue;
            }
            for (dw, ww) in [(0, 1.0 - fw), (1, fw)] {
                if ww == 0.0 {
                    continue;
                }
                acc += wd * wh * ww * tap(d0 + dd, h0 + dh, w0 + dw);
            }
        }
    }
    acc
}

#[inline]
fn split(x: f64) -> (i64, f64) {
    let f = x.floor();
    (f as i64, x - f)
}

/// One normalized source coordinate per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    dims: Dims3,
    vectors: Vec<Vec3>,
}

impl FlowField {
    pub fn new(dims: Dims3, vectors: Vec<Vec3>) -> Result<Self, FlowError> {
        dims.validate()?;
        if vectors.len() != dims.voxels() {
            return Err(FlowError::DimensionMismatch(format!(
                "{} vectors for {dims:?}",
                vectors.len()
            )));
        }
        if !vectors.iter().all(|v| v.iter().all(|c| c.is_finite())) {
            return Err(FlowError::NonFinite("flow field"));
        }
        Ok(Self { dims, vectors })
    }

    /// The flow that maps every voxel onto its own centre.
    pub fn identity(dims: Dims3) -> Self {
        Self::from_fn(dims, |c| c)
    }

    /// Builds a field by evaluating `f` at each voxel centre.
    pub fn from_fn(dims: Dims3, mut f: impl FnMut(Vec3) -> Vec3) -> Self {
        let mut vectors = Vec::with_capacity(dims.voxels());
        for d in 0..dims.depth {
            for h in 0..dims.height {
                for w in 0..dims.width {
                    vectors.push(f(dims.center(d, h, w)));
                }
            }
        }
        Self { dims, vectors }
    }

    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    pub fn vectors(&self) -> &[Vec3] {
        &self.vectors
    }

    pub fn at(&self, d: usize, h: usize, w: usize) -> Vec3 {
        self.vectors[self.dims.index(d, h, w)]
    }
}

/// Per-voxel convex weights over `K` candidate flows, stored `[k][voxel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionMask {
    k: usize,
    dims: Dims3,
    weights: Vec<f64>,
}

impl CompositionMask {
    /// Validates externally produced weights (range and per-voxel sum).
    pub fn new(k: usize, dims: Dims3, weights: Vec<f64>) -> Result<Self, FlowError> {
        dims.validate()?;
        if k == 0 {
            return Err(FlowError::NoKeypoints);
        }
        let n = dims.voxels();
        if weights.len() != k * n {
            return Err(FlowError::DimensionMismatch(format!(
                "{} weights for K={k} × {dims:?}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(FlowError::InvalidDims("mask weight outside [0, 1]".into()));
        }
        for v in 0..n {
            let sum: f64 = (0..k).map(|j| weights[j * n + v]).sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(FlowError::InvalidDims(format!("mask weights at voxel {v} sum to {sum}")));
            }
        }
        Ok(Self { k, dims, weights })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    pub fn weight(&self, k: usize, voxel: usize) -> f64 {
        self.weights[k * self.dims.voxels() + voxel]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// 2D occlusion multiplier in `[0, 1]`, row-major `H × W`.
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionMask {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl OcclusionMask {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self, FlowError> {
        if values.len() != height * width {
            return Err(FlowError::DimensionMismatch(format!(
                "{} occlusion values for {height}×{width}",
                values.len()
            )));
        }
        if let Some(&value) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(FlowError::OcclusionRange { value });
        }
        Ok(Self { height, width, values })
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self, FlowError> {
        Self::new(height, width, vec![value; height * width])
    }
}

/// `C × H × W` feature map (the depth-collapsed warped features).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self, FlowError> {
        if values.len() != channels * height * width {
            return Err(FlowError::DimensionMismatch(format!(
                "{} values for {channels}×{height}×{width}",
                values.len()
            )));
        }
        Ok(Self { channels, height, width, values })
    }
}

/// Precomputed first-order map for a single keypoint pair.
#[derive(Debug, Clone, Copy)]
pub struct FirstOrderFlow {
    linear: Mat3,
    driving: Vec3,
    source: Vec3,
}

impl FirstOrderFlow {
    pub fn new(index: usize, src: &KeypointSet, drv: &KeypointSet) -> Result<Self, FlowError> {
        let len = src.len().min(drv.len());
        let (s, d) = match (src.get(index), drv.get(index)) {
            (Some(s), Some(d)) => (s, d),
            _ => return Err(FlowError::IndexOutOfRange { index, len }),
        };
        let det = d.jacobian.determinant();
        let inv = match d.jacobian.try_inverse() {
            Some(inv) if det.abs() > MIN_JACOBIAN_DET => inv,
            _ => return Err(FlowError::SingularJacobian { index, det }),
        };
        Ok(Self { linear: s.jacobian * inv, driving: d.point, source: s.point })
    }

    #[inline]
    pub fn eval(&self, p: &Vec3) -> Vec3 {
        self.linear * (p - self.driving) + self.source
    }
}

/// `J_s J_d⁻¹ (p − x_d) + x_s` for keypoint `k`.
pub fn keypoint_flow_at(
    src: &KeypointSet,
    drv: &KeypointSet,
    k: usize,
    p: &Vec3,
) -> Result<Vec3, FlowError> {
    Ok(FirstOrderFlow::new(k, src, drv)?.eval(p))
}

/// Evaluates every keypoint's flow at each voxel centre of `dims`.
pub fn flow_grid(src: &KeypointSet, drv: &KeypointSet, dims: Dims3) -> Result<Vec<FlowField>, FlowError> {
    dims.validate()?;
    if src.len() != drv.len() {
        return Err(FlowError::KeypointCountMismatch { source_len: src.len(), driving_len: drv.len() });
    }
    if src.is_empty() {
        return Err(FlowError::NoKeypoints);
    }
    (0..src.len())
        .map(|k| {
            let flow = FirstOrderFlow::new(k, src, drv)?;
            Ok(FlowField::from_fn(dims, |p| flow.eval(&p)))
        })
        .collect()
}

/// Softmax over `k` for every voxel. `scores` is laid out `[k][voxel]`.
pub fn normalize_mask(k: usize, dims: Dims3, scores: &[f64]) -> Result<CompositionMask, FlowError> {
    dims.validate()?;
    if k == 0 {
        return Err(FlowError::NoKeypoints);
    }
    let n = dims.voxels();
    if scores.len() != k * n {
        return Err(FlowError::DimensionMismatch(format!("{} scores for K={k} × {dims:?}", scores.len())));
    }
    if !scores.iter().all(|s| s.is_finite()) {
        return Err(FlowError::NonFinite("mask scores"));
    }
    let mut weights = vec![0.0; k * n];
    for v in 0..n {
        let max = (0..k).map(|j| scores[j * n + v]).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for j in 0..k {
            let e = (scores[j * n + v] - max).exp();
            weights[j * n + v] = e;
            sum += e;
        }
        for j in 0..k {
            weights[j * n + v] /= sum;
        }
    }
    Ok(CompositionMask { k, dims, weights })
}

/// `w(p) = Σ_k m_k(p) w_k(p)`.
pub fn compose_flows(flows: &[FlowField], mask: &CompositionMask) -> Result<FlowField, FlowError> {
    if flows.len() != mask.k {
        return Err(FlowError::DimensionMismatch(format!(
            "{} flows for a K={} mask",
            flows.len(),
            mask.k
        )));
    }
    if let Some(f) = flows.iter().find(|f| f.dims != mask.dims) {
        return Err(FlowError::DimensionMismatch(format!(
            "flow {:?} vs mask {:?}",
            f.dims, mask.dims
        )));
    }
    let n = mask.dims.voxels();
    let vectors = (0..n)
        .map(|v| {
            flows
                .iter()
                .enumerate()
                .fold(Vector3::zeros(), |acc, (j, f)| acc + f.vectors[v] * mask.weights[j * n + v])
        })
        .collect();
    Ok(FlowField { dims: mask.dims, vectors })
}

/// Backward warp: output voxel `p` takes `vol` sampled at `flow(p)`.
pub fn warp_volume(vol: &FeatureVolume, flow: &FlowField) -> Result<FeatureVolume, FlowError> {
    if vol.dims != flow.dims {
        return Err(FlowError::DimensionMismatch(format!(
            "volume {:?} vs flow {:?}",
            vol.dims, flow.dims
        )));
    }
    let mut values = Vec::with_capacity(vol.values.len());
    for c in 0..vol.channels {
        let data = vol.channel(c);
        values.extend(flow.vectors.iter().map(|at| sample_channel(data, vol.dims, at)));
    }
    Ok(FeatureVolume { channels: vol.channels, dims: vol.dims, values })
}

/// Multiplies every channel by the occlusion mask.
pub fn apply_occlusion(features: &FeatureMap, o: &OcclusionMask) -> Result<FeatureMap, FlowError> {
    if features.height != o.height || features.width != o.width {
        return Err(FlowError::DimensionMismatch(format!(
            "features {}×{} vs occlusion {}×{}",
            features.height, features.width, o.height, o.width
        )));
    }
    let plane = o.values.len();
    let values = features
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| v * o.values[i % plane])
        .collect();
    Ok(FeatureMap { values, ..*features })
}
