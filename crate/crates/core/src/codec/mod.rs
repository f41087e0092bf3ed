//! Motion-frame compression.
//!
//! A frame is `3K + 6` numbers (Euler angles, translation, `K` deformation
//! vectors), each stored as a little-endian half-precision float, giving
//! `6K + 12` octets. Each octet position has its own 256-bin frequency table
//! learned from calibration frames, and a static range coder turns the frame
//! into a variable-length bitstream.
//!
//! The same coder, with a single shared table, compresses packed binary
//! residual latents.

mod adaptive;
mod frame;
mod range;
mod residual;
mod tables;

use thiserror::Error;

pub use adaptive::{choose_adaptive_k, min_keypoints, AdaptivePolicy, MAGNITUDE_COVERAGE};
pub use frame::{
    dequantize_frame, frame_len, half_round, keypoints_for_len, quantize_frame, quantize_frame_with_report,
    ClampEvent, DequantizedFrame, QuantizedFrame, ANGLE_LIMIT, LINEAR_LIMIT, POSE_VALUES,
};
pub use range::{RangeDecoder, RangeEncoder, SymbolModel, MODEL_TOTAL};
pub use residual::{
    entropy_decode_residual, entropy_encode_residual, pack_residual, unpack_residual, BinaryLatent,
    EncodedResidual, LatentProvider, ResidualTables, LATENT_BITS, LATENT_DIMS, PACKED_RESIDUAL_LEN,
};
pub use tables::{build_frequency_tables, FrequencyTableSet, TABLE_FILE_MAGIC, TABLE_FILE_VERSION};

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("non-finite value at frame component {component}")]
    NonFinite { component: usize },
    #[error("keypoint count {k_eff} outside 1..={available}")]
    KeypointRange { k_eff: usize, available: usize },
    #[error("{len} octets is not a valid frame length (6K + 12)")]
    Framing { len: usize },
    #[error("half-precision value at component {component} is NaN or infinite")]
    InvalidHalf { component: usize },
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("bitstream truncated")]
    Truncated,
    #[error("{extra} unexpected trailing octets in bitstream")]
    TrailingBytes { extra: usize },
    #[error("bitstream is corrupt")]
    Corrupt,
    #[error("budget of {budget} octets is below the minimum frame size {minimum}")]
    Budget { budget: usize, minimum: usize },
    #[error("expected {expected} elements, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("table file: {0}")]
    TableFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How the octets of an encoded payload are to be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadMode {
    /// Range-coded bitstream.
    Coded,
    /// Raw frame octets, used when coding would not be smaller.
    Raw,
}

/// Entropy-coded frame. The keypoint count travels next to the bitstream so
/// the decoder knows the frame length up front.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPayload {
    pub mode: PayloadMode,
    pub k_eff: usize,
    pub bytes: Vec<u8>,
}

impl EncodedPayload {
    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}

/// Codes `symbols[i]` under `model(i)`; falls back to raw when the coded
/// form is not strictly shorter.
fn encode_symbols<'a>(symbols: &[u8], model: impl Fn(usize) -> &'a SymbolModel) -> (PayloadMode, Vec<u8>) {
    let mut enc = RangeEncoder::with_capacity(symbols.len() + 4);
    for (i, &s) in symbols.iter().enumerate() {
        enc.encode(model(i), s);
    }
    let coded = enc.finish();
    if coded.len() < symbols.len() {
        (PayloadMode::Coded, coded)
    } else {
        (PayloadMode::Raw, symbols.to_vec())
    }
}

fn decode_symbols<'a>(
    mode: PayloadMode,
    bytes: &[u8],
    len: usize,
    model: impl Fn(usize) -> &'a SymbolModel,
) -> Result<Vec<u8>, CodecError> {
    match mode {
        PayloadMode::Raw => {
            if bytes.len() != len {
                return Err(CodecError::Framing { len: bytes.len() });
            }
            Ok(bytes.to_vec())
        }
        PayloadMode::Coded => {
            if bytes.len() >= len {
                // the encoder never emits a coded stream this long
                return Err(CodecError::Corrupt);
            }
            let mut dec = RangeDecoder::new(bytes)?;
            let out = (0..len).map(|i| dec.decode(model(i))).collect::<Result<Vec<_>, _>>()?;
            dec.finish()?;
            Ok(out)
        }
    }
}

/// Range-codes a quantized frame with its per-position tables.
pub fn entropy_encode(qf: &QuantizedFrame, tables: &FrequencyTableSet) -> Result<EncodedPayload, CodecError> {
    if qf.len() > tables.table_count() {
        return Err(CodecError::Configuration(format!(
            "frame of {} octets exceeds {} position tables",
            qf.len(),
            tables.table_count()
        )));
    }
    let (mode, bytes) = encode_symbols(qf.as_bytes(), |i| tables.model(i));
    Ok(EncodedPayload { mode, k_eff: qf.k_eff(), bytes })
}

/// Bit-exact inverse of [`entropy_encode`] given identical tables.
pub fn entropy_decode(payload: &EncodedPayload, tables: &FrequencyTableSet) -> Result<QuantizedFrame, CodecError> {
    if payload.k_eff == 0 || payload.k_eff > tables.k_max() {
        return Err(CodecError::KeypointRange { k_eff: payload.k_eff, available: tables.k_max() });
    }
    let len = frame_len(payload.k_eff);
    let bytes = decode_symbols(payload.mode, &payload.bytes, len, |i| tables.model(i))?;
    QuantizedFrame::from_bytes(bytes)
}
