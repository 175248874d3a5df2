//! Sequence encoder and decoder.
//!
//! Frames are processed strictly in order; a P-frame predicts from the
//! *reconstructed* previous frame, so encoder and decoder stay in lockstep.
//! Within a frame, everything up to entropy coding runs in parallel across
//! clusters, and entropy coding walks the clusters in canonical order.

use log::{debug, info};
use rayon::prelude::*;

use crate::clustering::kmeans_geometry;
use crate::coding::{
    dequantize, quantize, read_bitstream, write_bitstream, CodingMode, FrameContexts, FrameRecord, FrameType,
    StreamHeader,
};
use crate::config::SequenceConfig;
use crate::error::{Error, Result};
use crate::eval::{psnr, PsnrYuv, PEAK_8BIT};
use crate::graph::{build_epsilon_graph, combinatorial_laplacian, estimate_normals, GeneralizedLaplacian};
use crate::motion::{estimate_cluster_motion, ClusterMotion};
use crate::pointcloud_io::{centered_yuv_to_rgb, rgb_to_yuv, RawPointCloud, VoxelGrid};
use crate::rdo::{choose_mode, distortion_yuv, lambda_from_q, LambdaModel, ModeCost};
use crate::spatial::Point3;
use crate::transform::{eigendecompose, gft_forward, gft_inverse, inter_predict, TransformBasis};

/// Frame types of a low-delay-P sequence: an I-frame opens every GOP.
pub fn gop_plan(frame_count: usize, gop_size: usize) -> Vec<FrameType> {
    let gop = gop_size.max(1);
    (0..frame_count)
        .map(|t| {
            if t % gop == 0 {
                FrameType::Intra
            } else {
                FrameType::Predicted
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CodecOptions {
    /// Worker threads for per-cluster work; 0 uses rayon's global pool.
    pub threads: usize,
}

fn run_with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Everything derived from one cluster's geometry.
#[derive(Debug, Clone)]
pub struct ClusterAnalysis {
    /// Voxel indices of the members, ascending.
    pub members: Vec<usize>,
    pub laplacian: GeneralizedLaplacian,
    /// Eigenbasis of the combinatorial Laplacian. It is also the basis of
    /// `L + I` used for inter residuals.
    pub basis: TransformBasis,
    /// Reference voxels in the previous frame; `None` for I-frames and for
    /// clusters with no reference candidates.
    pub motion: Option<ClusterMotion>,
}

#[derive(Debug, Clone)]
pub struct FrameAnalysis {
    pub frame_type: FrameType,
    pub geometry_hash: u64,
    pub clusters: Vec<ClusterAnalysis>,
}

/// Clusters a voxelized frame and derives graphs, bases and (for P-frames)
/// motion. Identical on the encoder and decoder side.
pub fn analyze_frame(
    coords: &[[u32; 3]],
    geometry_hash: u64,
    frame_type: FrameType,
    previous: Option<&[[u32; 3]]>,
    config: &SequenceConfig,
) -> Result<FrameAnalysis> {
    let partition = kmeans_geometry(coords, config.target_cluster_size)?;
    let prev_positions: Option<Vec<Point3>> = match frame_type {
        FrameType::Intra => None,
        FrameType::Predicted => Some(
            previous
                .ok_or_else(|| Error::InvalidParameter("P-frame without a previous frame".into()))?
                .iter()
                .map(|c| c.map(f64::from))
                .collect(),
        ),
    };
    let clusters = partition
        .members()
        .into_par_iter()
        .map(|members| {
            let positions: Vec<Point3> = members.iter().map(|&i| coords[i].map(f64::from)).collect();
            let normals = estimate_normals(&positions, config.normal_k);
            let graph = build_epsilon_graph(&positions, &normals, config.epsilon_sq, config.sigma_sq);
            let laplacian = combinatorial_laplacian(&graph);
            let basis = eigendecompose(&laplacian)?;
            let motion = match &prev_positions {
                None => None,
                Some(prev) => match estimate_cluster_motion(&positions, prev, config.box_expand) {
                    Ok(m) => Some(m),
                    Err(Error::NoReferenceCandidates) => None,
                    Err(e) => return Err(e),
                },
            };
            Ok(ClusterAnalysis {
                members,
                laplacian,
                basis,
                motion,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameAnalysis {
        frame_type,
        geometry_hash,
        clusters,
    })
}

/// Quantized coefficients of one cluster in one mode, with the resulting
/// reconstruction.
#[derive(Debug, Clone)]
struct Candidate {
    indices: [Vec<i64>; 3],
    recon: Vec<[f64; 3]>,
}

impl Candidate {
    fn channels(&self) -> [&[i64]; 3] {
        [&self.indices[0], &self.indices[1], &self.indices[2]]
    }
}

fn channel(values: &[[f64; 3]], c: usize) -> Vec<f64> {
    values.iter().map(|v| v[c]).collect()
}

/// Transforms and quantizes `signal − base` on `basis` and reconstructs
/// `base + Φ·Q⁻¹(Q(Φᵀ(signal − base)))`.
fn code_cluster(
    basis: &TransformBasis,
    signal: &[[f64; 3]],
    base: Option<&[[f64; 3]]>,
    qstep: f64,
) -> Result<Candidate> {
    let n = signal.len();
    let mut indices: [Vec<i64>; 3] = Default::default();
    let mut recon = base.map_or_else(|| vec![[0.0; 3]; n], <[_]>::to_vec);
    for c in 0..3 {
        let mut residual = channel(signal, c);
        if let Some(b) = base {
            for (r, p) in residual.iter_mut().zip(b) {
                *r -= p[c];
            }
        }
        let block = quantize(&gft_forward(&residual, basis)?, qstep)?;
        let back = gft_inverse(&dequantize(&block), basis)?;
        for (r, v) in recon.iter_mut().zip(back) {
            r[c] += v;
        }
        indices[c] = block.indices;
    }
    Ok(Candidate { indices, recon })
}

/// Rebuilds a cluster from decoded indices; mirrors [`code_cluster`].
fn reconstruct_cluster(
    basis: &TransformBasis,
    indices: &[Vec<i64>; 3],
    base: Option<&[[f64; 3]]>,
    qstep: f64,
) -> Result<Vec<[f64; 3]>> {
    let n = basis.dim();
    let mut recon = base.map_or_else(|| vec![[0.0; 3]; n], <[_]>::to_vec);
    for c in 0..3 {
        let block = crate::coding::QuantizedBlock {
            indices: indices[c].clone(),
            qstep,
        };
        let back = gft_inverse(&dequantize(&block), basis)?;
        for (r, v) in recon.iter_mut().zip(back) {
            r[c] += v;
        }
    }
    Ok(recon)
}

fn gather(values: &[[f64; 3]], idx: &[usize]) -> Vec<[f64; 3]> {
    idx.iter().map(|&i| values[i]).collect()
}

fn prediction(cluster: &ClusterAnalysis, previous_recon: &[[f64; 3]]) -> Result<Option<Vec<[f64; 3]>>> {
    match &cluster.motion {
        None => Ok(None),
        Some(m) => {
            let refs = gather(previous_recon, &m.correspondence.ref_index);
            Ok(Some(inter_predict(&cluster.laplacian, &refs)?))
        }
    }
}

/// 64-bit FNV-1a over the decoder-reproducible state of a frame.
#[derive(Debug, Clone, Copy)]
struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn bytes(&mut self, b: &[u8]) {
        for &x in b {
            self.0 ^= u64::from(x);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.u64(x.to_bits());
        }
    }
}

/// Hash of clusters, bases, correspondences, modes and reconstruction.
pub fn mirror_hash(analysis: &FrameAnalysis, modes: &[CodingMode], recon: &[[f64; 3]]) -> u64 {
    let mut h = Fnv::new();
    h.u64(analysis.geometry_hash);
    h.u64(u64::from(analysis.frame_type == FrameType::Predicted));
    for c in &analysis.clusters {
        h.u64(c.members.len() as u64);
        for &m in &c.members {
            h.u64(m as u64);
        }
        h.f64s(&c.basis.eigenvalues);
        for k in 0..c.basis.dim() {
            h.f64s(c.basis.eigenvector(k));
        }
        match &c.motion {
            None => h.u64(u64::MAX),
            Some(m) => {
                for &i in &m.correspondence.ref_index {
                    h.u64(i as u64);
                }
            }
        }
    }
    for m in modes {
        h.u64(u64::from(*m == CodingMode::Inter));
    }
    for r in recon {
        h.f64s(r);
    }
    h.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameStats {
    pub index: usize,
    pub frame_type: FrameType,
    pub input_points: usize,
    pub voxels: usize,
    pub clusters: usize,
    pub intra_clusters: usize,
    pub inter_clusters: usize,
    /// P-frame clusters without reference candidates, coded intra.
    pub fallback_clusters: usize,
    /// Sum of cluster rates: payload bits plus mode bits.
    pub cluster_bits: u64,
    /// Serialized size of the frame record in bytes.
    pub record_bytes: usize,
    /// Quality of the decoded 8-bit colors on the original points.
    pub psnr: PsnrYuv,
}

/// Decoded (or encoder-reconstructed) frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedFrame {
    pub coords: Vec<[u32; 3]>,
    /// Reconstructed mid-level-centered YUV per voxel, unclamped.
    pub attributes: Vec<[f64; 3]>,
    pub point_map: Vec<usize>,
    /// Output color of every original point.
    pub colors: Vec<[u8; 3]>,
    pub modes: Vec<CodingMode>,
    pub mirror_hash: u64,
}

impl DecodedFrame {
    fn new(
        coords: Vec<[u32; 3]>,
        attributes: Vec<[f64; 3]>,
        point_map: Vec<usize>,
        modes: Vec<CodingMode>,
        mirror_hash: u64,
    ) -> Self {
        let voxel_rgb: Vec<[u8; 3]> = attributes.iter().map(|a| centered_yuv_to_rgb(*a)).collect();
        let colors = point_map.iter().map(|&v| voxel_rgb[v]).collect();
        DecodedFrame {
            coords,
            attributes,
            point_map,
            colors,
            modes,
            mirror_hash,
        }
    }

    pub fn to_point_cloud(&self, geometry: &RawPointCloud) -> Result<RawPointCloud> {
        RawPointCloud::new(geometry.positions.clone(), self.colors.clone())
    }
}

#[derive(Debug, Clone)]
pub struct EncodedSequence {
    pub bitstream: Vec<u8>,
    pub stats: Vec<FrameStats>,
    /// Encoder-side reconstruction, which the decoder must reproduce exactly.
    pub reconstruction: Vec<DecodedFrame>,
}

impl EncodedSequence {
    pub fn total_input_points(&self) -> usize {
        self.stats.iter().map(|s| s.input_points).sum()
    }
}

/// Quality of decoded 8-bit colors against the original colors of the same points.
pub fn color_psnr(raw: &RawPointCloud, colors: &[[u8; 3]]) -> Result<PsnrYuv> {
    let orig: Vec<[f64; 3]> = raw.colors.iter().map(|c| rgb_to_yuv(*c)).collect();
    let dec: Vec<[f64; 3]> = colors.iter().map(|c| rgb_to_yuv(*c)).collect();
    psnr(&orig, &dec, PEAK_8BIT)
}

pub fn encode_sequence(
    frames: &[RawPointCloud],
    config: &SequenceConfig,
    options: &CodecOptions,
) -> Result<EncodedSequence> {
    config.validate()?;
    if frames.is_empty() {
        return Err(Error::InsufficientData("no input frames".into()));
    }
    let frame_count = u32::try_from(frames.len()).map_err(|_| Error::InvalidParameter("too many frames".into()))?;
    run_with_threads(options.threads, || {
        let grid = VoxelGrid::fit(&frames[0], config.grid_dim)?;
        let plan = gop_plan(frames.len(), config.gop_size);
        let lambda = lambda_from_q(
            config.qstep,
            &LambdaModel {
                alpha: config.lambda_alpha,
                beta: config.lambda_beta,
            },
        )?;
        let mut records = Vec::with_capacity(frames.len());
        let mut stats = Vec::with_capacity(frames.len());
        let mut recon_frames: Vec<DecodedFrame> = Vec::with_capacity(frames.len());
        for (t, raw) in frames.iter().enumerate() {
            let prev = recon_frames.last();
            let (record, frame, s) =
                encode_frame(t, raw, &grid, plan[t], prev, config, lambda).map_err(|e| e.in_frame(t))?;
            info!(
                "frame {t} ({:?}): {} bits, {} intra / {} inter clusters, PSNR-Y {:.2} dB",
                s.frame_type, s.cluster_bits, s.intra_clusters, s.inter_clusters, s.psnr.y
            );
            records.push(record);
            stats.push(s);
            recon_frames.push(frame);
        }
        let header = StreamHeader {
            config: config.clone(),
            frame_count,
        };
        Ok(EncodedSequence {
            bitstream: write_bitstream(&header, &records)?,
            stats,
            reconstruction: recon_frames,
        })
    })?
}

fn encode_frame(
    index: usize,
    raw: &RawPointCloud,
    grid: &VoxelGrid,
    frame_type: FrameType,
    prev: Option<&DecodedFrame>,
    config: &SequenceConfig,
    lambda: f64,
) -> Result<(FrameRecord, DecodedFrame, FrameStats)> {
    let vf = grid.voxelize(raw)?;
    let hash = vf.geometry_hash();
    let analysis = analyze_frame(&vf.coords, hash, frame_type, prev.map(|p| p.coords.as_slice()), config)?;
    let qstep = config.qstep;

    let candidates: Vec<(Candidate, Option<Candidate>)> = analysis
        .clusters
        .par_iter()
        .map(|c| {
            let orig = gather(&vf.attributes, &c.members);
            let intra = code_cluster(&c.basis, &orig, None, qstep)?;
            let inter = match prev {
                Some(p) => match prediction(c, &p.attributes)? {
                    Some(pred) => Some(code_cluster(&c.basis, &orig, Some(&pred), qstep)?),
                    None => None,
                },
                None => None,
            };
            Ok((intra, inter))
        })
        .collect::<Result<_>>()?;

    let mut ctx = FrameContexts::default();
    let mut segments = Vec::with_capacity(candidates.len());
    let mut modes = Vec::with_capacity(candidates.len());
    let mut recon = vec![[0.0; 3]; vf.len()];
    let mut fallback = 0;
    let mode_bits = u64::from(frame_type == FrameType::Predicted);
    for (c, (intra, inter)) in analysis.clusters.iter().zip(&candidates) {
        let orig = gather(&vf.attributes, &c.members);
        let n = c.members.len();
        let (mode, chosen) = match (frame_type, inter) {
            (FrameType::Intra, _) => (CodingMode::Intra, intra),
            (FrameType::Predicted, None) => {
                fallback += 1;
                (CodingMode::Intra, intra)
            }
            (FrameType::Predicted, Some(inter)) => {
                let cost = |mode, cand: &Candidate| -> Result<ModeCost> {
                    let d = distortion_yuv(&orig, &cand.recon)?;
                    Ok(ModeCost::new(
                        mode,
                        d,
                        ctx.trial_bits(cand.channels()) + mode_bits,
                        n,
                        lambda,
                    ))
                };
                let ci = cost(CodingMode::Intra, intra)?;
                let cp = cost(CodingMode::Inter, inter)?;
                debug!("frame {index}: J intra {:.3} inter {:.3} (n={n})", ci.cost, cp.cost);
                match choose_mode(&ci, &cp) {
                    CodingMode::Intra => (CodingMode::Intra, intra),
                    CodingMode::Inter => (CodingMode::Inter, inter),
                }
            }
        };
        if frame_type == FrameType::Predicted {
            modes.push(mode);
        }
        segments.push(ctx.encode_cluster(chosen.channels()));
        for (&m, r) in c.members.iter().zip(&chosen.recon) {
            recon[m] = *r;
        }
    }

    let record = FrameRecord {
        frame_type,
        geometry_hash: hash,
        modes: modes.clone(),
        segments,
    };
    let cluster_bits = (0..record.cluster_count()).map(|k| record.cluster_bits(k)).sum();
    let inter_clusters = modes.iter().filter(|m| **m == CodingMode::Inter).count();
    let hash = mirror_hash(&analysis, &modes, &recon);
    let frame = DecodedFrame::new(vf.coords, recon, vf.point_map, modes, hash);
    let stats = FrameStats {
        index,
        frame_type,
        input_points: raw.point_count(),
        voxels: frame.coords.len(),
        clusters: analysis.clusters.len(),
        intra_clusters: analysis.clusters.len() - inter_clusters,
        inter_clusters,
        fallback_clusters: fallback,
        cluster_bits,
        record_bytes: record.encoded_len(),
        psnr: color_psnr(raw, &frame.colors)?,
    };
    Ok((record, frame, stats))
}

#[derive(Debug, Clone)]
pub struct DecodedSequence {
    pub header: StreamHeader,
    pub frames: Vec<DecodedFrame>,
}

/// Decodes a bitstream given the geometry of every frame. Only positions
/// are read from `geometry`; its colors are ignored.
pub fn decode_sequence(
    bitstream: &[u8],
    geometry: &[RawPointCloud],
    options: &CodecOptions,
) -> Result<DecodedSequence> {
    let (header, records) = read_bitstream(bitstream)?;
    if geometry.len() != records.len() {
        return Err(Error::DimensionMismatch {
            expected: records.len(),
            actual: geometry.len(),
        });
    }
    if records.is_empty() {
        return Ok(DecodedSequence {
            header,
            frames: Vec::new(),
        });
    }
    let config = header.config.clone();
    let frames = run_with_threads(options.threads, || -> Result<Vec<DecodedFrame>> {
        let grid = VoxelGrid::fit(&geometry[0], config.grid_dim)?;
        let plan = gop_plan(records.len(), config.gop_size);
        let mut out: Vec<DecodedFrame> = Vec::with_capacity(records.len());
        for (t, (record, raw)) in records.iter().zip(geometry).enumerate() {
            if record.frame_type != plan[t] {
                return Err(Error::Corrupt(format!(
                    "frame {t}: frame type does not match the GOP structure"
                )));
            }
            let frame = decode_frame(t, record, raw, &grid, out.last(), &config).map_err(|e| e.in_frame(t))?;
            out.push(frame);
        }
        Ok(out)
    })??;
    Ok(DecodedSequence { header, frames })
}

fn decode_frame(
    index: usize,
    record: &FrameRecord,
    raw: &RawPointCloud,
    grid: &VoxelGrid,
    prev: Option<&DecodedFrame>,
    config: &SequenceConfig,
) -> Result<DecodedFrame> {
    let vf = grid.voxelize(raw)?;
    let hash = vf.geometry_hash();
    if hash != record.geometry_hash {
        return Err(Error::GeometryMismatch { frame: index });
    }
    let analysis = analyze_frame(
        &vf.coords,
        hash,
        record.frame_type,
        prev.map(|p| p.coords.as_slice()),
        config,
    )?;
    if analysis.clusters.len() != record.cluster_count() {
        return Err(Error::Corrupt(format!(
            "{} clusters in the stream, {} derived from geometry",
            record.cluster_count(),
            analysis.clusters.len()
        )));
    }
    let modes: Vec<CodingMode> = match record.frame_type {
        FrameType::Intra => vec![CodingMode::Intra; record.cluster_count()],
        FrameType::Predicted => record.modes.clone(),
    };
    let mut ctx = FrameContexts::default();
    let mut indices = Vec::with_capacity(record.cluster_count());
    for (c, seg) in analysis.clusters.iter().zip(&record.segments) {
        indices.push(ctx.decode_cluster(seg, c.members.len())?);
    }
    let parts: Vec<Vec<[f64; 3]>> = analysis
        .clusters
        .par_iter()
        .zip(indices.par_iter())
        .zip(modes.par_iter())
        .map(|((c, idx), mode)| {
            let pred = match mode {
                CodingMode::Intra => None,
                CodingMode::Inter => {
                    let p = prev.ok_or_else(|| Error::Corrupt("inter cluster without a reference frame".into()))?;
                    Some(
                        prediction(c, &p.attributes)?
                            .ok_or_else(|| Error::Corrupt("inter cluster without reference candidates".into()))?,
                    )
                }
            };
            reconstruct_cluster(&c.basis, idx, pred.as_deref(), config.qstep)
        })
        .collect::<Result<_>>()?;
    let mut recon = vec![[0.0; 3]; vf.len()];
    for (c, part) in analysis.clusters.iter().zip(parts) {
        for (&m, r) in c.members.iter().zip(part) {
            recon[m] = r;
        }
    }
    let stream_modes = record.modes.clone();
    let h = mirror_hash(&analysis, &stream_modes, &recon);
    Ok(DecodedFrame::new(vf.coords, recon, vf.point_map, stream_modes, h))
}
