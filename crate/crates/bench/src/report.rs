//! Line-oriented `key=value` reports.
//!
//! Keys under `published.` are literature constants carried for comparison;
//! keys under `measured.` are computed by the current run. Nothing ever
//! mixes the two.

use std::collections::BTreeMap;
use std::fmt::{self, Display};

use kpcodec::reference::{
    PUBLISHED_ADAPTIVE_BPP, PUBLISHED_ADAPTIVE_MEAN_KEYPOINTS, PUBLISHED_H264_CRF36_RATIO_20KP,
    PUBLISHED_H264_CRF36_RATIO_ADAPTIVE, PUBLISHED_PAYLOADS, PUBLISHED_RESIDUAL_KB,
};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    lines: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    /// Floats are written in shortest round-trip form, so a reader parsing
    /// them gets back the identical `f64`.
    pub fn push(&mut self, key: impl Into<String>, value: impl Display) -> &mut Self {
        self.lines.push((key.into(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn lines(&self) -> &[(String, String)] {
        &self.lines
    }

    /// Appends the published reference block.
    pub fn push_published(&mut self) -> &mut Self {
        self.push("published.note", "reference constants from the literature; not measured by this run");
        for row in &PUBLISHED_PAYLOADS {
            let key = format!("published.{}", row.method);
            self.push(format!("{key}.raw_bytes"), row.raw_bytes);
            self.push(format!("{key}.coded_bytes"), row.coded_bytes);
        }
        self.push("published.h264_crf36_ratio.ours-adaptive", PUBLISHED_H264_CRF36_RATIO_ADAPTIVE);
        self.push("published.h264_crf36_ratio.ours-20kp", PUBLISHED_H264_CRF36_RATIO_20KP);
        self.push("published.ours-adaptive.mean_keypoints", PUBLISHED_ADAPTIVE_MEAN_KEYPOINTS);
        self.push("published.ours-adaptive.bpp", PUBLISHED_ADAPTIVE_BPP);
        self.push("published.residual.coded_kb", PUBLISHED_RESIDUAL_KB)
    }

    pub fn parse(text: &str) -> BTreeMap<String, String> {
        text.lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }
}

impl Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.lines {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_roundtrip_through_text() {
        let mut r = Report::new();
        let x = 53.03f64 * 8.0 / 262_144.0;
        r.push("measured.bpp", x);
        let parsed = Report::parse(&r.to_string());
        assert_eq!(parsed["measured.bpp"].parse::<f64>().unwrap(), x);
    }

    #[test]
    fn published_block_is_labelled() {
        let mut r = Report::new();
        r.push_published();
        assert!(r.lines().iter().all(|(k, _)| k.starts_with("published.")));
        assert_eq!(r.get("published.ours-20kp.raw_bytes"), Some("132"));
        assert_eq!(r.get("published.h264_crf36_ratio.ours-adaptive"), Some("10.37"));
    }
}
