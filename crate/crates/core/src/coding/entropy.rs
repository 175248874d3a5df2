//! Coefficient binarization and context modelling.
//!
//! Each integer is coded as a zero flag, a sign bit and an order-0
//! exp-Golomb code of `|v| - 1`. Zero flags, signs and the unary prefix are
//! context coded, with separate contexts for a few frequency bands (the
//! position of the coefficient in its block); exp-Golomb suffix bits are
//! sent raw.

use super::arith::{BitModel, RangeDecoder, RangeEncoder};
use crate::error::{Error, Result};

pub const BANDS: usize = 5;
const PREFIX_CONTEXTS: usize = 16;
const MAX_PREFIX: usize = 64;

/// Band of a coefficient position: DC, then dyadic ranges of indices.
pub fn band_of(index: usize) -> usize {
    match index {
        0 => 0,
        1..=3 => 1,
        4..=15 => 2,
        16..=63 => 3,
        _ => 4,
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct BandContexts {
    zero: BitModel,
    sign: BitModel,
    prefix: [BitModel; PREFIX_CONTEXTS],
}

/// Adaptive state for one attribute channel.
#[derive(Debug, Clone, Copy, Default)]
pub struct ChannelContexts {
    bands: [BandContexts; BANDS],
}

impl ChannelContexts {
    pub fn encode(&mut self, enc: &mut RangeEncoder, values: &[i64]) {
        for (i, &v) in values.iter().enumerate() {
            let ctx = &mut self.bands[band_of(i)];
            enc.encode(&mut ctx.zero, v != 0);
            if v == 0 {
                continue;
            }
            enc.encode(&mut ctx.sign, v < 0);
            // m + 1 = |v| >= 1
            let m1 = v.unsigned_abs();
            let k = 63 - m1.leading_zeros() as usize;
            for j in 0..=k {
                enc.encode(&mut ctx.prefix[j.min(PREFIX_CONTEXTS - 1)], j < k);
            }
            for b in (0..k).rev() {
                enc.encode_direct((m1 >> b) & 1 == 1);
            }
        }
    }

    pub fn decode(&mut self, dec: &mut RangeDecoder<'_>, count: usize) -> Result<Vec<i64>> {
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let ctx = &mut self.bands[band_of(i)];
            if !dec.decode(&mut ctx.zero)? {
                out.push(0);
                continue;
            }
            let negative = dec.decode(&mut ctx.sign)?;
            let mut k = 0;
            while dec.decode(&mut ctx.prefix[k.min(PREFIX_CONTEXTS - 1)])? {
                k += 1;
                if k >= MAX_PREFIX {
                    return Err(Error::Corrupt("exp-Golomb prefix too long".into()));
                }
            }
            let mut m1: u64 = 1;
            for _ in 0..k {
                m1 = (m1 << 1) | u64::from(dec.decode_direct()?);
            }
            let v = if negative {
                0i64.checked_sub_unsigned(m1)
            } else {
                i64::try_from(m1).ok()
            };
            out.push(v.ok_or_else(|| Error::Corrupt("coefficient out of range".into()))?);
        }
        Ok(out)
    }
}

/// Contexts for the three channels of one frame; created fresh per frame.
#[derive(Debug, Clone, Copy, Default)]
pub struct FrameContexts {
    channels: [ChannelContexts; 3],
}

impl FrameContexts {
    /// Codes one cluster (three channels of equal length) as a
    /// self-contained, flushed segment. Contexts carry over to the next call.
    pub fn encode_cluster(&mut self, channels: [&[i64]; 3]) -> Vec<u8> {
        let mut enc = RangeEncoder::new();
        for (ctx, values) in self.channels.iter_mut().zip(channels) {
            ctx.encode(&mut enc, values);
        }
        enc.finish()
    }

    /// Size in bits the cluster would take, without touching `self`.
    pub fn trial_bits(&self, channels: [&[i64]; 3]) -> u64 {
        let mut copy = *self;
        copy.encode_cluster(channels).len() as u64 * 8
    }

    pub fn decode_cluster(&mut self, segment: &[u8], n: usize) -> Result<[Vec<i64>; 3]> {
        let mut dec = RangeDecoder::new(segment)?;
        let y = self.channels[0].decode(&mut dec, n)?;
        let u = self.channels[1].decode(&mut dec, n)?;
        let v = self.channels[2].decode(&mut dec, n)?;
        if dec.position() != segment.len() {
            return Err(Error::Corrupt(format!(
                "cluster segment has {} trailing bytes",
                segment.len() - dec.position()
            )));
        }
        Ok([y, u, v])
    }
}

/// Codes a standalone sequence with fresh contexts. The empty sequence maps
/// to the empty payload.
pub fn entropy_encode(indices: &[i64]) -> Vec<u8> {
    if indices.is_empty() {
        return Vec::new();
    }
    let mut enc = RangeEncoder::new();
    ChannelContexts::default().encode(&mut enc, indices);
    enc.finish()
}

pub fn entropy_decode(bytes: &[u8], count: usize) -> Result<Vec<i64>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut dec = RangeDecoder::new(bytes)?;
    ChannelContexts::default().decode(&mut dec, count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp};

    fn laplacian_ints(n: usize, scale: f64, seed: u64) -> Vec<i64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = Exp::new(1.0 / scale).unwrap();
        (0..n)
            .map(|_| {
                let m = e.sample(&mut rng).round() as i64;
                if rng.random() {
                    m
                } else {
                    -m
                }
            })
            .collect()
    }

    #[test]
    fn all_zero_block_is_small() {
        let bytes = entropy_encode(&[0; 1000]);
        assert!(bytes.len() * 8 < 200, "{} bits", bytes.len() * 8);
        assert_eq!(entropy_decode(&bytes, 1000).unwrap(), vec![0; 1000]);
    }

    #[test]
    fn laplacian_round_trip() {
        let v = laplacian_ints(100_000, 6.0, 1);
        let bytes = entropy_encode(&v);
        assert_eq!(entropy_decode(&bytes, v.len()).unwrap(), v);
    }

    #[test]
    fn extremes_round_trip() {
        let v = vec![i64::MIN, i64::MAX, -1, 1, 0, 1 << 40, -(1 << 40)];
        assert_eq!(entropy_decode(&entropy_encode(&v), v.len()).unwrap(), v);
    }

    #[test]
    fn empty_sequence() {
        assert!(entropy_encode(&[]).is_empty());
        assert!(entropy_decode(&[], 0).unwrap().is_empty());
    }

    #[test]
    fn truncated_stream() {
        let v = laplacian_ints(2000, 20.0, 2);
        let bytes = entropy_encode(&v);
        let r = entropy_decode(&bytes[..bytes.len() / 2], v.len());
        assert!(matches!(r, Err(Error::UnexpectedEof)));
        assert_eq!(Error::UnexpectedEof.to_string(), "unexpected end of stream");
    }

    #[test]
    fn frame_contexts_carry_over() {
        let blocks: Vec<[Vec<i64>; 3]> = (0..4)
            .map(|s| [0, 1, 2].map(|c| laplacian_ints(300, 3.0, 10 * s + c)))
            .collect();
        let mut enc = FrameContexts::default();
        let mut segments = Vec::new();
        for b in &blocks {
            let trial = enc.trial_bits([&b[0], &b[1], &b[2]]);
            let seg = enc.encode_cluster([&b[0], &b[1], &b[2]]);
            assert_eq!(trial, seg.len() as u64 * 8);
            segments.push(seg);
        }
        let mut dec = FrameContexts::default();
        for (b, seg) in blocks.iter().zip(&segments) {
            assert_eq!(&dec.decode_cluster(seg, 300).unwrap(), b);
        }
        let mut dec = FrameContexts::default();
        let mut padded = segments[0].clone();
        padded.push(0);
        assert!(matches!(dec.decode_cluster(&padded, 300), Err(Error::Corrupt(_))));
    }
}
