//! Container format.
//!
//! ```text
//! header  "PGFT" | version u8 | grid_dim u32 | qstep f64 | gop u32 |
//!         cluster_size u32 | epsilon_sq f64 | sigma_sq f64 | normal_k u32 |
//!         box_expand f64 | frame_count u32
//! frame   type u8 (0 = I, 1 = P) | geometry_hash u64 | cluster_count u32 |
//!         [P only] mode flags, one bit per cluster, LSB first, 1 = inter |
//!         per cluster: varint byte length, range-coded segment |
//!         crc32 of the frame record u32
//! ```
//! All integers little-endian.

use crate::config::SequenceConfig;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PGFT";
pub const VERSION: u8 = 1;
pub const HEADER_BYTES: usize = 4 + 1 + 4 + 8 + 4 + 4 + 8 + 8 + 4 + 8 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameType {
    Intra,
    Predicted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CodingMode {
    Intra,
    Inter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamHeader {
    /// Decoder-relevant configuration; the λ-model coefficients are not
    /// transmitted and read back as defaults.
    pub config: SequenceConfig,
    pub frame_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_type: FrameType,
    pub geometry_hash: u64,
    /// One mode per cluster for P-frames; empty for I-frames.
    pub modes: Vec<CodingMode>,
    /// Range-coded payload of every cluster, canonical cluster order.
    pub segments: Vec<Vec<u8>>,
}

impl FrameRecord {
    pub fn cluster_count(&self) -> usize {
        self.segments.len()
    }

    /// Serialized size of this record, checksum included.
    pub fn encoded_len(&self) -> usize {
        let flags = match self.frame_type {
            FrameType::Intra => 0,
            FrameType::Predicted => self.segments.len().div_ceil(8),
        };
        let segments: usize = self.segments.iter().map(|s| varint_len(s.len() as u64) + s.len()).sum();
        1 + 8 + 4 + flags + segments + 4
    }

    /// Payload bits of cluster `k` plus its mode bit.
    pub fn cluster_bits(&self, k: usize) -> u64 {
        let mode_bit = u64::from(self.frame_type == FrameType::Predicted);
        self.segments[k].len() as u64 * 8 + mode_bit
    }
}

fn varint_len(v: u64) -> usize {
    (64 - v.leading_zeros() as usize).div_ceil(7).max(1)
}

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn u32_field(name: &str, v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidParameter(format!("{name} {v} does not fit the header")))
}

pub fn write_bitstream(header: &StreamHeader, frames: &[FrameRecord]) -> Result<Vec<u8>> {
    if header.frame_count as usize != frames.len() {
        return Err(Error::DimensionMismatch {
            expected: header.frame_count as usize,
            actual: frames.len(),
        });
    }
    let c = &header.config;
    let mut out = Vec::with_capacity(HEADER_BYTES);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&c.grid_dim.to_le_bytes());
    out.extend_from_slice(&c.qstep.to_le_bytes());
    out.extend_from_slice(&u32_field("gop_size", c.gop_size)?.to_le_bytes());
    out.extend_from_slice(&u32_field("target_cluster_size", c.target_cluster_size)?.to_le_bytes());
    out.extend_from_slice(&c.epsilon_sq.to_le_bytes());
    out.extend_from_slice(&c.sigma_sq.to_le_bytes());
    out.extend_from_slice(&u32_field("normal_k", c.normal_k)?.to_le_bytes());
    out.extend_from_slice(&c.box_expand.to_le_bytes());
    out.extend_from_slice(&header.frame_count.to_le_bytes());
    for f in frames {
        write_frame(&mut out, f)?;
    }
    Ok(out)
}

fn write_frame(out: &mut Vec<u8>, f: &FrameRecord) -> Result<()> {
    let start = out.len();
    let k = f.segments.len();
    out.push(match f.frame_type {
        FrameType::Intra => 0,
        FrameType::Predicted => 1,
    });
    out.extend_from_slice(&f.geometry_hash.to_le_bytes());
    out.extend_from_slice(&u32_field("cluster count", k)?.to_le_bytes());
    match f.frame_type {
        FrameType::Intra => {
            if !f.modes.is_empty() {
                return Err(Error::InvalidParameter("I-frames carry no mode flags".into()));
            }
        }
        FrameType::Predicted => {
            if f.modes.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    actual: f.modes.len(),
                });
            }
            let mut flags = vec![0u8; k.div_ceil(8)];
            for (i, m) in f.modes.iter().enumerate() {
                if *m == CodingMode::Inter {
                    flags[i / 8] |= 1 << (i % 8);
                }
            }
            out.extend_from_slice(&flags);
        }
    }
    for s in &f.segments {
        put_varint(out, s.len() as u64);
        out.extend_from_slice(s);
    }
    let crc = crc32fast::hash(&out[start..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(())
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::UnexpectedEof)?;
        let s = self.data.get(self.pos..end).ok_or(Error::UnexpectedEof)?;
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn varint(&mut self) -> Result<u64> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.u8()?;
            v |= u64::from(b & 0x7F) << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(Error::Corrupt("varint longer than 64 bits".into()))
    }
}

pub fn read_header(bytes: &[u8]) -> Result<StreamHeader> {
    let mut r = Reader { data: bytes, pos: 0 };
    read_header_from(&mut r)
}

fn read_header_from(r: &mut Reader<'_>) -> Result<StreamHeader> {
    if r.data.len() >= 4 && &r.data[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    r.take(4)?;
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let config = SequenceConfig {
        grid_dim: r.u32()?,
        qstep: r.f64()?,
        gop_size: r.u32()? as usize,
        target_cluster_size: r.u32()? as usize,
        epsilon_sq: r.f64()?,
        sigma_sq: r.f64()?,
        normal_k: r.u32()? as usize,
        box_expand: r.f64()?,
        ..SequenceConfig::default()
    };
    config
        .validate()
        .map_err(|e| Error::Corrupt(format!("invalid header: {e}")))?;
    Ok(StreamHeader {
        config,
        frame_count: r.u32()?,
    })
}

pub fn read_bitstream(bytes: &[u8]) -> Result<(StreamHeader, Vec<FrameRecord>)> {
    let mut r = Reader { data: bytes, pos: 0 };
    let header = read_header_from(&mut r)?;
    let mut frames = Vec::new();
    for index in 0..header.frame_count as usize {
        frames.push(read_frame(&mut r, index)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok((header, frames))
}

fn read_frame(r: &mut Reader<'_>, index: usize) -> Result<FrameRecord> {
    let start = r.pos;
    let frame_type = match r.u8()? {
        0 => FrameType::Intra,
        1 => FrameType::Predicted,
        t => return Err(Error::Corrupt(format!("frame {index}: unknown frame type {t}"))),
    };
    let geometry_hash = r.u64()?;
    let k = r.u32()? as usize;
    let modes = match frame_type {
        FrameType::Intra => Vec::new(),
        FrameType::Predicted => {
            let flags = r.take(k.div_ceil(8))?;
            (0..k)
                .map(|i| {
                    if flags[i / 8] >> (i % 8) & 1 == 1 {
                        CodingMode::Inter
                    } else {
                        CodingMode::Intra
                    }
                })
                .collect()
        }
    };
    let mut segments = Vec::with_capacity(k.min(1 << 16));
    for _ in 0..k {
        let len = usize::try_from(r.varint()?).map_err(|_| Error::UnexpectedEof)?;
        segments.push(r.take(len)?.to_vec());
    }
    let crc = crc32fast::hash(&r.data[start..r.pos]);
    if r.u32()? != crc {
        return Err(Error::Corrupt(format!("frame {index}: checksum mismatch")));
    }
    Ok(FrameRecord {
        frame_type,
        geometry_hash,
        modes,
        segments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(frames: u32) -> StreamHeader {
        StreamHeader {
            config: SequenceConfig::default(),
            frame_count: frames,
        }
    }

    fn sample_frames() -> Vec<FrameRecord> {
        vec![
            FrameRecord {
                frame_type: FrameType::Intra,
                geometry_hash: 0xDEAD_BEEF,
                modes: vec![],
                segments: vec![vec![0, 1, 2, 3, 4], vec![0; 300]],
            },
            FrameRecord {
                frame_type: FrameType::Predicted,
                geometry_hash: 7,
                modes: (0..11)
                    .map(|i| {
                        if i % 3 == 0 {
                            CodingMode::Inter
                        } else {
                            CodingMode::Intra
                        }
                    })
                    .collect(),
                segments: (0..11).map(|i| vec![i as u8; i * 20]).collect(),
            },
        ]
    }

    #[test]
    fn empty_sequence_is_header_only() {
        let bytes = write_bitstream(&header(0), &[]).unwrap();
        assert_eq!(bytes.len(), HEADER_BYTES);
        let (h, frames) = read_bitstream(&bytes).unwrap();
        assert_eq!(h, header(0));
        assert!(frames.is_empty());
    }

    #[test]
    fn round_trip() {
        let frames = sample_frames();
        let bytes = write_bitstream(&header(2), &frames).unwrap();
        let (h, back) = read_bitstream(&bytes).unwrap();
        assert_eq!(back, frames);
        assert_eq!(back[0].cluster_count(), 2);
        assert!(back[0].modes.is_empty());
        assert_eq!(write_bitstream(&h, &back).unwrap(), bytes);
        let total: usize = HEADER_BYTES + frames.iter().map(FrameRecord::encoded_len).sum::<usize>();
        assert_eq!(total, bytes.len());
        assert_eq!(back[1].cluster_bits(3), 60 * 8 + 1);
        assert_eq!(back[0].cluster_bits(0), 40);
    }

    #[test]
    fn header_errors() {
        let mut bytes = write_bitstream(&header(0), &[]).unwrap();
        bytes[4] = 9;
        assert!(matches!(read_bitstream(&bytes), Err(Error::UnsupportedVersion(9))));
        bytes[0] = b'X';
        assert!(matches!(read_bitstream(&bytes), Err(Error::BadMagic)));
        assert!(matches!(read_bitstream(b"PG"), Err(Error::UnexpectedEof)));
    }

    #[test]
    fn truncation_and_corruption() {
        let bytes = write_bitstream(&header(2), &sample_frames()).unwrap();
        for cut in [HEADER_BYTES - 1, HEADER_BYTES + 3, bytes.len() - 1] {
            assert!(
                matches!(read_bitstream(&bytes[..cut]), Err(Error::UnexpectedEof)),
                "cut {cut}"
            );
        }
        let mut bad = bytes.clone();
        let i = bytes.len() - 30;
        bad[i] ^= 0x10;
        assert!(matches!(read_bitstream(&bad), Err(Error::Corrupt(_))));
        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(read_bitstream(&extra), Err(Error::Corrupt(_))));
    }

    #[test]
    fn mode_flag_validation() {
        let mut f = sample_frames();
        f[1].modes.pop();
        assert!(write_bitstream(&header(2), &f).is_err());
        assert!(write_bitstream(&header(3), &sample_frames()).is_err());
    }
}
