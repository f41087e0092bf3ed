//! Recorded frame files: `"KPFR"`, version u16 LE, then one
//! `[K_eff u8][6·K_eff + 12 octets]` record per frame.

use std::fs;
use std::path::Path;

use kpcodec::codec::{frame_len, QuantizedFrame};

use crate::BenchError;

pub const RECORDING_MAGIC: [u8; 4] = *b"KPFR";
pub const RECORDING_VERSION: u16 = 1;

pub fn encode_recording(frames: &[QuantizedFrame]) -> Result<Vec<u8>, BenchError> {
    let mut out = Vec::with_capacity(6 + frames.iter().map(|f| 1 + f.len()).sum::<usize>());
    out.extend_from_slice(&RECORDING_MAGIC);
    out.extend_from_slice(&RECORDING_VERSION.to_le_bytes());
    for f in frames {
        let k = u8::try_from(f.k_eff())
            .map_err(|_| BenchError::Recording(format!("K_eff {} does not fit a record header", f.k_eff())))?;
        out.push(k);
        out.extend_from_slice(f.as_bytes());
    }
    Ok(out)
}

pub fn decode_recording(bytes: &[u8]) -> Result<Vec<QuantizedFrame>, BenchError> {
    if bytes.len() < 6 || bytes[..4] != RECORDING_MAGIC {
        return Err(BenchError::Recording("missing KPFR header".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != RECORDING_VERSION {
        return Err(BenchError::Recording(format!("unsupported version {version}")));
    }
    let mut rest = &bytes[6..];
    let mut frames = Vec::new();
    while let Some((&k, tail)) = rest.split_first() {
        let len = frame_len(k as usize);
        if k == 0 || tail.len() < len {
            return Err(BenchError::Recording(format!("truncated or empty record {}", frames.len())));
        }
        frames.push(QuantizedFrame::from_bytes(tail[..len].to_vec())?);
        rest = &tail[len..];
    }
    Ok(frames)
}

pub fn write_recording(path: &Path, frames: &[QuantizedFrame]) -> Result<(), BenchError> {
    fs::write(path, encode_recording(frames)?)?;
    Ok(())
}

pub fn read_recording(path: &Path) -> Result<Vec<QuantizedFrame>, BenchError> {
    decode_recording(&fs::read(path)?)
}
