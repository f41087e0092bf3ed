//! Static 32-bit range coder with carry propagation.
//!
//! The encoder keeps `low` in a 64-bit register so a carry out of bit 32 can
//! be pushed back into already-emitted octets. Renormalization emits one
//! octet whenever the range drops below 2^24, and `finish` flushes the four
//! octets of `low`. The decoder reads exactly as many octets as the encoder
//! wrote, which lets it reject both truncated and over-long streams.

use super::CodecError;

const TOP: u32 = 1 << 24;

/// Every [`SymbolModel`] sums to this.
pub const MODEL_TOTAL: u32 = 1 << 16;

/// Quantized cumulative frequencies for one byte position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolModel {
    freq: [u32; 256],
    cum: [u32; 257],
}

impl SymbolModel {
    /// Scales raw counts to [`MODEL_TOTAL`], keeping every symbol at least 1.
    ///
    /// Every count must be non-zero; callers smooth first.
    pub fn from_counts(counts: &[u64; 256]) -> Self {
        let total: u128 = counts.iter().map(|&c| c as u128).sum();
        debug_assert!(counts.iter().all(|&c| c > 0));
        let m = MODEL_TOTAL as u128;
        let mut freq = [0u32; 256];
        for (f, &c) in freq.iter_mut().zip(counts) {
            let scaled = (c as u128 * m + total / 2) / total;
            *f = scaled.max(1) as u32;
        }

        let mut sum: i64 = freq.iter().map(|&f| f as i64).sum();
        let target = MODEL_TOTAL as i64;
        while sum != target {
            let (idx, &top) = freq
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .expect("256 entries");
            if sum < target {
                freq[idx] += (target - sum) as u32;
                sum = target;
            } else {
                let take = (sum - target).min(top as i64 - 1);
                freq[idx] -= take as u32;
                sum -= take;
            }
        }

        let mut cum = [0u32; 257];
        for s in 0..256 {
            cum[s + 1] = cum[s] + freq[s];
        }
        Self { freq, cum }
    }

    pub fn uniform() -> Self {
        Self::from_counts(&[1; 256])
    }

    pub fn freq(&self, symbol: u8) -> u32 {
        self.freq[symbol as usize]
    }

    /// Model probability of `symbol`.
    pub fn probability(&self, symbol: u8) -> f64 {
        self.freq[symbol as usize] as f64 / MODEL_TOTAL as f64
    }

    #[inline]
    fn lookup(&self, target: u32) -> u8 {
        // largest s with cum[s] <= target
        (self.cum.partition_point(|&c| c <= target) - 1) as u8
    }
}

#[derive(Debug, Clone)]
pub struct RangeEncoder {
    low: u64,
    range: u32,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::with_capacity(0)
    }
}

impl RangeEncoder {
    pub fn with_capacity(cap: usize) -> Self {
        Self { low: 0, range: u32::MAX, out: Vec::with_capacity(cap) }
    }

    pub fn encode(&mut self, model: &SymbolModel, symbol: u8) {
        let s = symbol as usize;
        let r = self.range / MODEL_TOTAL;
        self.low += r as u64 * model.cum[s] as u64;
        self.range = r * model.freq[s];
        if self.low >> 32 != 0 {
            self.propagate_carry();
            self.low &= 0xFFFF_FFFF;
        }
        while self.range < TOP {
            self.out.push((self.low >> 24) as u8);
            self.low = (self.low << 8) & 0xFFFF_FFFF;
            self.range <<= 8;
        }
    }

    fn propagate_carry(&mut self) {
        for b in self.out.iter_mut().rev() {
            let (v, overflow) = b.overflowing_add(1);
            *b = v;
            if !overflow {
                return;
            }
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        self.out.extend_from_slice(&(self.low as u32).to_be_bytes());
        self.out
    }
}

#[derive(Debug)]
pub struct RangeDecoder<'a> {
    value: u32,
    range: u32,
    input: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(input: &'a [u8]) -> Result<Self, CodecError> {
        if input.len() < 4 {
            return Err(CodecError::Truncated);
        }
        let value = u32::from_be_bytes([input[0], input[1], input[2], input[3]]);
        Ok(Self { value, range: u32::MAX, input, pos: 4 })
    }

    pub fn decode(&mut self, model: &SymbolModel) -> Result<u8, CodecError> {
        let r = self.range / MODEL_TOTAL;
        let target = self.value / r;
        if target >= MODEL_TOTAL {
            return Err(CodecError::Corrupt);
        }
        let s = model.lookup(target);
        self.value -= r * model.cum[s as usize];
        self.range = r * model.freq[s as usize];
        while self.range < TOP {
            let byte = *self.input.get(self.pos).ok_or(CodecError::Truncated)?;
            self.pos += 1;
            self.value = (self.value << 8) | byte as u32;
            self.range <<= 8;
        }
        Ok(s)
    }

    /// Fails unless every input octet was consumed.
    pub fn finish(self) -> Result<(), CodecError> {
        match self.input.len() - self.pos {
            0 => Ok(()),
            extra => Err(CodecError::TrailingBytes { extra }),
        }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn skewed_counts() -> [u64; 256] {
        let mut c = [1u64; 256];
        c[0] = 100_000;
        c[255] = 500;
        c[17] = 3;
        c
    }

    #[test]
    fn model_sums_to_total() {
        for counts in [[1u64; 256], skewed_counts(), {
            let mut c = [1u64; 256];
            c[9] = u64::MAX / 512;
            c
        }] {
            let m = SymbolModel::from_counts(&counts);
            assert_eq!(m.cum[256], MODEL_TOTAL);
            assert!(m.freq.iter().all(|&f| f >= 1));
        }
    }

    #[test]
    fn lookup_hits_owner() {
        let m = SymbolModel::from_counts(&skewed_counts());
        for s in 0..=255u8 {
            let lo = m.cum[s as usize];
            let hi = m.cum[s as usize + 1];
            assert_eq!(m.lookup(lo), s);
            assert_eq!(m.lookup(hi - 1), s);
        }
    }

    #[test]
    fn carry_propagates_through_ff_run() {
        // Symbols near the end of the alphabet push low upward and force carries.
        let mut counts = [1u64; 256];
        counts[255] = 1 << 40;
        let m = SymbolModel::from_counts(&counts);
        let msg: Vec<u8> = (0..4000).map(|i| if i % 97 == 0 { 254 } else { 255 }).collect();
        let mut enc = RangeEncoder::default();
        for &s in &msg {
            enc.encode(&m, s);
        }
        let bytes = enc.finish();
        let mut dec = RangeDecoder::new(&bytes).unwrap();
        let back: Vec<u8> = (0..msg.len()).map(|_| dec.decode(&m).unwrap()).collect();
        dec.finish().unwrap();
        assert_eq!(back, msg);
    }

    #[test]
    fn empty_stream_is_truncated() {
        assert!(matches!(RangeDecoder::new(&[1, 2, 3]), Err(CodecError::Truncated)));
    }

    proptest! {
        #[test]
        fn roundtrip_arbitrary(msg in proptest::collection::vec(any::<u8>(), 0..600), hot in any::<u8>()) {
            let mut counts = [1u64; 256];
            counts[hot as usize] = 5_000;
            let m = SymbolModel::from_counts(&counts);
            let mut enc = RangeEncoder::default();
            for &s in &msg {
                enc.encode(&m, s);
            }
            let bytes = enc.finish();
            let mut dec = RangeDecoder::new(&bytes).unwrap();
            let back: Vec<u8> = (0..msg.len()).map(|_| dec.decode(&m).unwrap()).collect();
            prop_assert!(dec.finish().is_ok());
            prop_assert_eq!(back, msg);
        }
    }
}
