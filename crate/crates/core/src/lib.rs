//! Compact keypoint-based motion representation for talking-head video.
//!
//! A speaker is described once by a [`geometry::CanonicalGeometry`]; every
//! subsequent frame only needs a head pose plus per-keypoint expression
//! deformations. This crate owns the whole path from those numbers to bytes
//! on the wire and back:
//!
//! * [`geometry`]: Euler-angle rotations, keypoint composition and its
//!   inverse, receiver-side view offsets.
//! * [`motion_field`]: first-order per-keypoint backward flows, softmax
//!   composition masks and trilinear warping of 3D feature volumes.
//! * [`loss`]: evaluators for the geometric priors used when training the
//!   keypoint estimators, reused here as stream validators.
//! * [`codec`]: half-precision frame layout, per-position frequency tables,
//!   a static range coder, adaptive keypoint counts and residual packing.
//! * [`protocol`]: packet framing and sender/receiver session state.
//! * [`reference`]: published comparison figures, kept apart from anything
//!   this crate measures.

pub mod codec;
pub mod geometry;
pub mod loss;
pub mod motion_field;
pub mod protocol;
pub mod reference;
