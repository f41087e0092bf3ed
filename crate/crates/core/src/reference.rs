//! Published comparison figures.
//!
//! These are literature values measured on private test videos. They are
//! reported next to this crate's own measurements and never recomputed.

/// One row of per-frame metadata sizes at 512×512, in octets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PublishedPayload {
    pub method: &'static str,
    pub raw_bytes: f64,
    pub coded_bytes: f64,
}

pub const PUBLISHED_PAYLOADS: [PublishedPayload; 4] = [
    PublishedPayload { method: "fs-vid2vid", raw_bytes: 504.0, coded_bytes: 231.42 },
    PublishedPayload { method: "FOMM", raw_bytes: 240.0, coded_bytes: 171.09 },
    PublishedPayload { method: "ours-20kp", raw_bytes: 132.0, coded_bytes: 84.44 },
    PublishedPayload { method: "ours-adaptive", raw_bytes: 81.16, coded_bytes: 53.03 },
];

/// Bandwidth reduction against H.264 at CRF 36 for equal perceived quality.
pub const PUBLISHED_H264_CRF36_RATIO_ADAPTIVE: f64 = 10.37;
pub const PUBLISHED_H264_CRF36_RATIO_20KP: f64 = 6.5;

/// Mean transmitted keypoint count under the adaptive scheme (of K = 20).
pub const PUBLISHED_ADAPTIVE_MEAN_KEYPOINTS: f64 = 11.52;

/// Published bits per pixel of the adaptive scheme at 512×512.
pub const PUBLISHED_ADAPTIVE_BPP: f64 = 0.001618;

/// Mean size of an arithmetic-coded binary residual latent, in kilobytes.
pub const PUBLISHED_RESIDUAL_KB: f64 = 13.40;

pub fn published(method: &str) -> Option<&'static PublishedPayload> {
    PUBLISHED_PAYLOADS.iter().find(|p| p.method == method)
}
