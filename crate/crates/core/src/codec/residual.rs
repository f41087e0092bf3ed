//! Binary residual latents: bit packing and entropy coding.
//!
//! The latent is a `32 × 64 × 64` grid of signs produced by an external
//! residual encoder. It is packed row-major, most significant bit first,
//! into 16384 octets and range-coded with one shared 256-bin table.

use super::range::SymbolModel;
use super::{decode_symbols, encode_symbols, CodecError, PayloadMode};

pub const LATENT_DIMS: (usize, usize, usize) = (32, 64, 64);
pub const LATENT_BITS: usize = LATENT_DIMS.0 * LATENT_DIMS.1 * LATENT_DIMS.2;
pub const PACKED_RESIDUAL_LEN: usize = LATENT_BITS / 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryLatent {
    bits: Vec<bool>,
}

impl BinaryLatent {
    pub fn new(bits: Vec<bool>) -> Result<Self, CodecError> {
        if bits.len() != LATENT_BITS {
            return Err(CodecError::Dimension { expected: LATENT_BITS, actual: bits.len() });
        }
        Ok(Self { bits })
    }

    pub fn zeros() -> Self {
        Self { bits: vec![false; LATENT_BITS] }
    }

    /// Builds a latent from the sign of each element, `true` for `>= 0`.
    pub fn from_signs(values: &[f32]) -> Result<Self, CodecError> {
        Self::new(values.iter().map(|&v| v >= 0.0).collect())
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, c: usize, h: usize, w: usize) -> bool {
        self.bits[(c * LATENT_DIMS.1 + h) * LATENT_DIMS.2 + w]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Source of residual latents. The network that produces them lives
/// outside this crate; anything that can hand over a [`BinaryLatent`] for a
/// frame qualifies.
pub trait LatentProvider {
    fn residual_for(&mut self, frame_index: u64) -> Option<BinaryLatent>;
}

impl<F> LatentProvider for F
where
    F: FnMut(u64) -> Option<BinaryLatent>,
{
    fn residual_for(&mut self, frame_index: u64) -> Option<BinaryLatent> {
        self(frame_index)
    }
}

pub fn pack_residual(latent: &BinaryLatent) -> Vec<u8> {
    latent
        .bits
        .chunks_exact(8)
        .map(|byte| byte.iter().fold(0u8, |acc, &b| (acc << 1) | b as u8))
        .collect()
}

pub fn unpack_residual(packed: &[u8]) -> Result<BinaryLatent, CodecError> {
    if packed.len() != PACKED_RESIDUAL_LEN {
        return Err(CodecError::Dimension { expected: PACKED_RESIDUAL_LEN, actual: packed.len() });
    }
    let bits = packed
        .iter()
        .flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1 == 1))
        .collect();
    Ok(BinaryLatent { bits })
}

/// Single smoothed 256-bin table shared by every residual octet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidualTables {
    counts: [u64; 256],
    model: SymbolModel,
}

impl Default for ResidualTables {
    fn default() -> Self {
        Self::uniform()
    }
}

impl ResidualTables {
    pub fn uniform() -> Self {
        Self { counts: [1; 256], model: SymbolModel::uniform() }
    }

    pub fn from_counts(counts: [u64; 256]) -> Result<Self, CodecError> {
        if counts.contains(&0) {
            return Err(CodecError::Configuration("residual table has a zero count".into()));
        }
        Ok(Self { model: SymbolModel::from_counts(&counts), counts })
    }

    /// Add-one smoothed octet histogram over packed calibration residuals.
    pub fn build<'a>(calibration: impl IntoIterator<Item = &'a [u8]>) -> Result<Self, CodecError> {
        let mut counts = [1u64; 256];
        let mut seen = false;
        for packed in calibration {
            if packed.len() != PACKED_RESIDUAL_LEN {
                return Err(CodecError::Dimension { expected: PACKED_RESIDUAL_LEN, actual: packed.len() });
            }
            seen = true;
            for &b in packed {
                counts[b as usize] += 1;
            }
        }
        if !seen {
            return Err(CodecError::Configuration("empty residual calibration set".into()));
        }
        Self::from_counts(counts)
    }

    pub fn counts(&self) -> &[u64; 256] {
        &self.counts
    }

    pub fn model(&self) -> &SymbolModel {
        &self.model
    }

    pub fn checksum(&self) -> u32 {
        let mut h = crc32fast::Hasher::new();
        for c in &self.counts {
            h.update(&c.to_le_bytes());
        }
        h.finalize()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedResidual {
    pub mode: PayloadMode,
    pub bytes: Vec<u8>,
}

pub fn entropy_encode_residual(packed: &[u8], tables: &ResidualTables) -> Result<EncodedResidual, CodecError> {
    if packed.len() != PACKED_RESIDUAL_LEN {
        return Err(CodecError::Dimension { expected: PACKED_RESIDUAL_LEN, actual: packed.len() });
    }
    let (mode, bytes) = encode_symbols(packed, |_| &tables.model);
    Ok(EncodedResidual { mode, bytes })
}

pub fn entropy_decode_residual(enc: &EncodedResidual, tables: &ResidualTables) -> Result<Vec<u8>, CodecError> {
    decode_symbols(enc.mode, &enc.bytes, PACKED_RESIDUAL_LEN, |_| &tables.model)
}
