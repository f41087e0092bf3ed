//! Per-position frequency tables and their calibration file.
//!
//! File layout, all little-endian:
//!
//! ```text
//! "KPFT" | version u16 | k_max u16 | table_count u32 | table_count × 256 × u64 | crc32 u32
//! ```
//!
//! The trailing CRC-32 covers everything between the magic and itself.

use std::io::{Read, Write};

use super::frame::{frame_len, QuantizedFrame};
use super::range::SymbolModel;
use super::CodecError;

pub const TABLE_FILE_MAGIC: [u8; 4] = *b"KPFT";
pub const TABLE_FILE_VERSION: u16 = 1;

/// One 256-bin count table per frame octet position, `6 K_max + 12` tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyTableSet {
    k_max: usize,
    counts: Vec<[u64; 256]>,
    models: Vec<SymbolModel>,
}

impl FrequencyTableSet {
    /// Wraps raw counts. Every count must be at least 1.
    pub fn from_counts(k_max: usize, counts: Vec<[u64; 256]>) -> Result<Self, CodecError> {
        if k_max == 0 || k_max > u16::MAX as usize {
            return Err(CodecError::Configuration(format!("K_max {k_max} out of range")));
        }
        if counts.len() != frame_len(k_max) {
            return Err(CodecError::Configuration(format!(
                "{} tables for K_max {k_max}, expected {}",
                counts.len(),
                frame_len(k_max)
            )));
        }
        if let Some(p) = counts.iter().position(|t| t.contains(&0)) {
            return Err(CodecError::Configuration(format!("table {p} has a zero count")));
        }
        let total: u128 = counts.iter().flat_map(|t| t.iter()).map(|&c| c as u128).sum();
        if counts.iter().any(|t| t.iter().map(|&c| c as u128).sum::<u128>() > u64::MAX as u128) || total == 0 {
            return Err(CodecError::Configuration("table counts overflow".into()));
        }
        let models = counts.iter().map(SymbolModel::from_counts).collect();
        Ok(Self { k_max, counts, models })
    }

    /// Pure smoothing: every symbol equally likely at every position.
    pub fn uniform(k_max: usize) -> Self {
        Self::from_counts(k_max, vec![[1; 256]; frame_len(k_max)]).expect("valid uniform tables")
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn table_count(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self, position: usize) -> &[u64; 256] {
        &self.counts[position]
    }

    pub fn model(&self, position: usize) -> &SymbolModel {
        &self.models[position]
    }

    /// Empirical entropy in bits of the observed (pre-smoothing) counts at
    /// `position`. Positions nothing was observed at report 0.
    pub fn observed_entropy(&self, position: usize) -> f64 {
        let observed: Vec<f64> = self.counts[position].iter().map(|&c| (c - 1) as f64).collect();
        let n: f64 = observed.iter().sum();
        if n == 0.0 {
            return 0.0;
        }
        -observed.iter().filter(|&&c| c > 0.0).map(|&c| (c / n) * (c / n).log2()).sum::<f64>()
    }

    fn body(&self) -> Vec<u8> {
        let mut body = Vec::with_capacity(8 + self.counts.len() * 256 * 8);
        body.extend_from_slice(&TABLE_FILE_VERSION.to_le_bytes());
        body.extend_from_slice(&(self.k_max as u16).to_le_bytes());
        body.extend_from_slice(&(self.counts.len() as u32).to_le_bytes());
        for table in &self.counts {
            for c in table {
                body.extend_from_slice(&c.to_le_bytes());
            }
        }
        body
    }

    /// CRC-32 of the serialized body; used to confirm both endpoints hold
    /// the same tables.
    pub fn checksum(&self) -> u32 {
        crc32fast::hash(&self.body())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let body = self.body();
        let mut out = Vec::with_capacity(body.len() + 8);
        out.extend_from_slice(&TABLE_FILE_MAGIC);
        out.extend_from_slice(&body);
        out.extend_from_slice(&crc32fast::hash(&body).to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let bad = |m: &str| CodecError::TableFile(m.to_string());
        if bytes.len() < 4 + 8 + 4 {
            return Err(bad("file too short"));
        }
        if bytes[..4] != TABLE_FILE_MAGIC {
            return Err(bad("bad magic"));
        }
        let body = &bytes[4..bytes.len() - 4];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 octets"));
        if crc32fast::hash(body) != stored {
            return Err(bad("checksum mismatch"));
        }
        let version = u16::from_le_bytes([body[0], body[1]]);
        if version != TABLE_FILE_VERSION {
            return Err(CodecError::TableFile(format!("unsupported version {version}")));
        }
        let k_max = u16::from_le_bytes([body[2], body[3]]) as usize;
        let count = u32::from_le_bytes(body[4..8].try_into().expect("4 octets")) as usize;
        let tables = &body[8..];
        if tables.len() != count * 256 * 8 {
            return Err(CodecError::TableFile(format!(
                "{} table octets for {count} tables",
                tables.len()
            )));
        }
        let counts = tables
            .chunks_exact(256 * 8)
            .map(|chunk| {
                let mut t = [0u64; 256];
                for (slot, c) in t.iter_mut().zip(chunk.chunks_exact(8)) {
                    *slot = u64::from_le_bytes(c.try_into().expect("8 octets"));
                }
                t
            })
            .collect();
        Self::from_counts(k_max, counts)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CodecError> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, CodecError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

/// Counts octet values per position across `calibration`, with add-one
/// smoothing. Shorter frames only contribute to the positions they cover.
pub fn build_frequency_tables(calibration: &[QuantizedFrame], k_max: usize) -> Result<FrequencyTableSet, CodecError> {
    if calibration.is_empty() {
        return Err(CodecError::Configuration("empty calibration set".into()));
    }
    let mut counts = vec![[1u64; 256]; frame_len(k_max)];
    for (i, f) in calibration.iter().enumerate() {
        if f.len() > counts.len() {
            return Err(CodecError::Configuration(format!(
                "calibration frame {i} has {} keypoints, more than K_max {k_max}",
                f.k_eff()
            )));
        }
        for (table, &b) in counts.iter_mut().zip(f.as_bytes()) {
            table[b as usize] += 1;
        }
    }
    FrequencyTableSet::from_counts(k_max, counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_frames_count_plus_one() {
        let f = QuantizedFrame::from_bytes((0..42u8).collect()).unwrap();
        let t = build_frequency_tables(&vec![f; 7], 8).unwrap();
        assert_eq!(t.table_count(), 60);
        for p in 0..42 {
            for s in 0..256 {
                let expect = if s == p { 8 } else { 1 };
                assert_eq!(t.counts(p)[s], expect);
            }
            assert_eq!(t.observed_entropy(p), 0.0);
        }
        // positions past every frame only carry smoothing
        for p in 42..60 {
            assert!(t.counts(p).iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn empty_calibration_rejected() {
        assert!(matches!(build_frequency_tables(&[], 20), Err(CodecError::Configuration(_))));
    }

    #[test]
    fn oversized_calibration_frame_rejected() {
        let f = QuantizedFrame::from_bytes(vec![0; 132]).unwrap();
        assert!(build_frequency_tables(&[f], 19).is_err());
    }

    #[test]
    fn file_roundtrip_and_corruption() {
        let f = QuantizedFrame::from_bytes(vec![3; 18]).unwrap();
        let t = build_frequency_tables(&[f], 2).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(bytes.len(), 4 + 8 + 24 * 256 * 8 + 4);
        assert_eq!(&bytes[..4], b"KPFT");
        assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), 2);
        assert_eq!(FrequencyTableSet::from_bytes(&bytes).unwrap(), t);
        assert_eq!(
            u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap()),
            t.checksum()
        );

        let mut broken = bytes.clone();
        broken[100] ^= 1;
        assert!(matches!(FrequencyTableSet::from_bytes(&broken), Err(CodecError::TableFile(_))));
        let mut magic = bytes;
        magic[0] = b'X';
        assert!(FrequencyTableSet::from_bytes(&magic).is_err());
    }

    #[test]
    fn zero_count_rejected() {
        let mut counts = vec![[1u64; 256]; 18];
        counts[3][9] = 0;
        assert!(FrequencyTableSet::from_counts(1, counts).is_err());
    }
}
