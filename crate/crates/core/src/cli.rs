//! The `pgft` command line.
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 on a usage error.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use crate::codec::{decode_sequence, encode_sequence, CodecOptions, FrameStats};
use crate::coding::{read_header, FrameType};
use crate::config::SequenceConfig;
use crate::eval::{
    bpip, dataset_precision_study, psnr_from_mse, synthetic_patch, synthetic_precision_study, PrecisionEstimate,
    SimilarityReport, PEAK_8BIT,
};
use crate::pointcloud_io::{encode_ply, read_ply, rgb_to_yuv, PlyFormat, RawPointCloud, VoxelGrid};
use crate::rdo::{fit_lambda_model, RdSample};
use crate::synthetic::{generate, SyntheticKind, SyntheticSpec};

/// Environment variable holding the default worker thread count.
pub const THREADS_ENV: &str = "PGFT_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "pgft",
    version,
    about = "Graph-transform codec for dynamic point cloud colors"
)]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode the colors of a PLY sequence.
    Encode(EncodeArgs),
    /// Decode a bitstream onto the original geometry.
    Decode(DecodeArgs),
    /// Encode and decode at several quantization steps and write the RD curve.
    RdSweep(RdSweepArgs),
    /// Compare empirical precision matrices with generalized Laplacians.
    ValidateGmrf(ValidateArgs),
    /// Fit the λ(Q) = α·Q^β model to an RD curve.
    FitLambda(FitArgs),
    /// Write a synthetic sequence as PLY files.
    Synth(SynthArgs),
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be positive, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn non_negative_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be non-negative, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be positive".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn synthetic_kind(s: &str) -> Result<SyntheticKind, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

/// Where frames come from: PLY files or the built-in generator.
#[derive(Debug, Args)]
struct SourceArgs {
    /// A directory (every *.ply, by name) or a comma-separated list of PLY files.
    #[arg(
        long,
        value_delimiter = ',',
        required_unless_present = "synthetic",
        conflicts_with = "synthetic"
    )]
    input: Vec<PathBuf>,
    /// Generate the input instead: wave, static or rigid-motion.
    #[arg(long, value_parser = synthetic_kind)]
    synthetic: Option<SyntheticKind>,
    /// Frames to generate with --synthetic.
    #[arg(long, default_value_t = 2, value_parser = positive_usize)]
    frames: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args)]
struct CodecArgs {
    /// Voxel grid resolution; defaults to 4096, or to the exact grid of --synthetic content.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    grid_dim: Option<u32>,
    #[arg(long, default_value_t = 8, value_parser = positive_usize)]
    gop: usize,
    /// Squared ε-graph radius in voxels (50 for dense 10-bit content, 300 for sparser scans).
    #[arg(long, default_value_t = 50.0, value_parser = positive_f64)]
    epsilon2: f64,
    #[arg(long, default_value_t = 600, value_parser = positive_usize)]
    cluster_size: usize,
    #[arg(long, default_value_t = 0.4, value_parser = positive_f64)]
    sigma2: f64,
    #[arg(long, default_value_t = 15, value_parser = positive_usize)]
    normal_k: usize,
    /// Reference search box growth (3.0 = 300%).
    #[arg(long, default_value_t = 3.0, value_parser = non_negative_f64)]
    box_expand: f64,
    #[arg(long, default_value_t = 0.0624, value_parser = positive_f64)]
    lambda_alpha: f64,
    #[arg(long, default_value_t = 1.6238, value_parser = positive_f64)]
    lambda_beta: f64,
    /// Worker threads (0 = one per core).
    #[arg(long, env = THREADS_ENV, default_value_t = 0)]
    threads: usize,
}

impl CodecArgs {
    fn config(&self, qstep: f64, synthetic_grid: Option<u32>) -> SequenceConfig {
        SequenceConfig {
            grid_dim: self
                .grid_dim
                .or(synthetic_grid)
                .unwrap_or(SequenceConfig::default().grid_dim),
            target_cluster_size: self.cluster_size,
            epsilon_sq: self.epsilon2,
            sigma_sq: self.sigma2,
            normal_k: self.normal_k,
            box_expand: self.box_expand,
            gop_size: self.gop,
            qstep,
            lambda_alpha: self.lambda_alpha,
            lambda_beta: self.lambda_beta,
        }
    }

    fn options(&self) -> CodecOptions {
        CodecOptions { threads: self.threads }
    }
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Bitstream to write.
    #[arg(long)]
    output: PathBuf,
    /// Per-frame statistics file (tab separated); defaults to <output>.stats.tsv.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Quantization step (quality factor Q).
    #[arg(long, value_parser = positive_f64)]
    q: f64,
    #[command(flatten)]
    codec: CodecArgs,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    #[arg(long)]
    bitstream: PathBuf,
    /// Geometry of every frame: a directory or a comma-separated list of PLY files.
    #[arg(
        long,
        value_delimiter = ',',
        required_unless_present = "synthetic",
        conflicts_with = "synthetic"
    )]
    geometry: Vec<PathBuf>,
    /// Regenerate the geometry of a synthetic sequence instead.
    #[arg(long, value_parser = synthetic_kind)]
    synthetic: Option<SyntheticKind>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Directory for the decoded frames (frame_0000.ply, ...).
    #[arg(long)]
    output: PathBuf,
    /// Write ASCII instead of binary PLY.
    #[arg(long)]
    ascii: bool,
    #[arg(long, env = THREADS_ENV, default_value_t = 0)]
    threads: usize,
}

#[derive(Debug, Args)]
struct RdSweepArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Quantization steps to visit.
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32", value_parser = positive_f64)]
    q_list: Vec<f64>,
    /// RD curve file (tab separated).
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    codec: CodecArgs,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Frames for the dataset study (directory or comma-separated list);
    /// without it a synthetic patch is used.
    #[arg(long, value_delimiter = ',')]
    frames: Vec<PathBuf>,
    /// Number of aligned patches K; the study uses K+1 frames.
    #[arg(long, default_value_t = 19, value_parser = positive_usize)]
    patches: usize,
    /// Points per patch in the dataset study.
    #[arg(long, default_value_t = 30, value_parser = positive_usize)]
    patch_size: usize,
    /// Side of the synthetic lattice patch.
    #[arg(long, default_value_t = 10, value_parser = positive_usize)]
    side: usize,
    /// Lattice spacing of the synthetic patch, in voxels.
    #[arg(long, default_value_t = 4.0, value_parser = positive_f64)]
    spacing: f64,
    /// Height jitter of the synthetic patch, in voxels.
    #[arg(long, default_value_t = 1)]
    roughness: u32,
    /// Samples per patch point in the synthetic study.
    #[arg(long, default_value_t = 10, value_parser = positive_usize)]
    samples_per_node: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    grid_dim: Option<u32>,
    #[arg(long, default_value_t = 50.0, value_parser = positive_f64)]
    epsilon2: f64,
    #[arg(long, default_value_t = 0.4, value_parser = positive_f64)]
    sigma2: f64,
    #[arg(long, default_value_t = 15, value_parser = positive_usize)]
    normal_k: usize,
    #[arg(long, default_value_t = 3.0, value_parser = non_negative_f64)]
    box_expand: f64,
    /// Also write the report here (tab separated key/value lines).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// RD curve with a header row and columns q, bpip and mse (as written by rd-sweep).
    #[arg(long)]
    curve: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// wave, static or rigid-motion.
    #[arg(long, value_parser = synthetic_kind)]
    kind: SyntheticKind,
    #[arg(long, default_value_t = 2, value_parser = positive_usize)]
    frames: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    output: PathBuf,
}

/// Parses `std::env::args`, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Encode(a) => encode(a),
        Command::Decode(a) => decode(a),
        Command::RdSweep(a) => rd_sweep(a),
        Command::ValidateGmrf(a) => validate_gmrf(a),
        Command::FitLambda(a) => fit_lambda(a),
        Command::Synth(a) => synth(a),
    }
}

fn expand_inputs(paths: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("cannot list {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x.eq_ignore_ascii_case("ply")))
                .collect();
            found.sort();
            if found.is_empty() {
                bail!("no .ply files in {}", p.display());
            }
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn load_frames(paths: &[PathBuf]) -> anyhow::Result<Vec<RawPointCloud>> {
    let files = expand_inputs(paths)?;
    files
        .iter()
        .map(|f| read_ply(f).with_context(|| format!("reading {}", f.display())))
        .collect()
}

/// Frames plus the exact grid resolution when they are synthetic.
fn load_source(src: &SourceArgs) -> anyhow::Result<(Vec<RawPointCloud>, Option<u32>)> {
    match src.synthetic {
        Some(kind) => {
            let seq = generate(&SyntheticSpec {
                seed: src.seed,
                ..SyntheticSpec::new(kind, src.frames)
            })?;
            Ok((seq.frames, Some(seq.grid_dim)))
        }
        None => Ok((load_frames(&src.input)?, None)),
    }
}

/// Writes `files` so that either all of them exist afterwards or none do.
fn write_all_or_nothing(files: &[(PathBuf, Vec<u8>)]) -> anyhow::Result<()> {
    let mut staged: Vec<(PathBuf, &Path)> = Vec::new();
    let mut done: Vec<&Path> = Vec::new();
    let result = (|| -> anyhow::Result<()> {
        for (path, bytes) in files {
            let mut tmp = path.clone().into_os_string();
            tmp.push(".partial");
            let tmp = PathBuf::from(tmp);
            fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
            staged.push((tmp, path));
        }
        for (tmp, path) in &staged {
            fs::rename(tmp, path).with_context(|| format!("writing {}", path.display()))?;
            done.push(path);
        }
        Ok(())
    })();
    if result.is_err() {
        for (tmp, _) in &staged {
            let _ = fs::remove_file(tmp);
        }
        for path in done {
            let _ = fs::remove_file(path);
        }
    }
    result
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

fn tsv<W: std::io::Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().delimiter(b'\t').from_writer(w)
}

fn stats_table(stats: &[FrameStats]) -> anyhow::Result<Vec<u8>> {
    let mut w = tsv(Vec::new());
    w.write_record([
        "frame",
        "type",
        "input_points",
        "voxels",
        "clusters",
        "intra",
        "inter",
        "fallback",
        "bits",
        "bytes",
        "psnr_y",
        "psnr_u",
        "psnr_v",
    ])?;
    for s in stats {
        w.write_record([
            s.index.to_string(),
            match s.frame_type {
                FrameType::Intra => "I".into(),
                FrameType::Predicted => "P".into(),
            },
            s.input_points.to_string(),
            s.voxels.to_string(),
            s.clusters.to_string(),
            s.intra_clusters.to_string(),
            s.inter_clusters.to_string(),
            s.fallback_clusters.to_string(),
            s.cluster_bits.to_string(),
            s.record_bytes.to_string(),
            fmt_db(s.psnr.y),
            fmt_db(s.psnr.u),
            fmt_db(s.psnr.v),
        ])?;
    }
    Ok(w.into_inner()?)
}

fn encode(a: EncodeArgs) -> anyhow::Result<()> {
    let (frames, synthetic_grid) = load_source(&a.source)?;
    let config = a.codec.config(a.q, synthetic_grid);
    let enc = encode_sequence(&frames, &config, &a.codec.options()).context("encoding failed")?;
    let table = stats_table(&enc.stats)?;
    let stats_path = a.stats.unwrap_or_else(|| {
        let mut p = a.output.clone().into_os_string();
        p.push(".stats.tsv");
        PathBuf::from(p)
    });
    write_all_or_nothing(&[(a.output.clone(), enc.bitstream.clone()), (stats_path, table.clone())])?;
    std::io::stdout().write_all(&table)?;
    let rate = bpip(8 * enc.bitstream.len() as u64, enc.total_input_points())?;
    println!(
        "wrote {} ({} bytes, {:.4} bits per input point)",
        a.output.display(),
        enc.bitstream.len(),
        rate
    );
    Ok(())
}

fn decode(a: DecodeArgs) -> anyhow::Result<()> {
    let bytes = fs::read(&a.bitstream).with_context(|| format!("reading {}", a.bitstream.display()))?;
    let geometry = match a.synthetic {
        Some(kind) => {
            let header = read_header(&bytes).context("cannot read the bitstream header")?;
            generate(&SyntheticSpec {
                seed: a.seed,
                ..SyntheticSpec::new(kind, (header.frame_count as usize).max(1))
            })?
            .frames
        }
        None => load_frames(&a.geometry)?,
    };
    let dec = decode_sequence(&bytes, &geometry, &CodecOptions { threads: a.threads }).context("decoding failed")?;
    let format = if a.ascii {
        PlyFormat::Ascii
    } else {
        PlyFormat::BinaryLittleEndian
    };
    let mut files = Vec::with_capacity(dec.frames.len());
    for (t, (frame, raw)) in dec.frames.iter().zip(&geometry).enumerate() {
        let cloud = frame.to_point_cloud(raw)?;
        files.push((a.output.join(format!("frame_{t:04}.ply")), encode_ply(&cloud, format)));
        let q = crate::codec::color_psnr(raw, &frame.colors)?;
        println!(
            "frame {t}: {} points, PSNR-Y {} dB against the geometry files' colors",
            raw.point_count(),
            fmt_db(q.y)
        );
    }
    fs::create_dir_all(&a.output).with_context(|| format!("creating {}", a.output.display()))?;
    write_all_or_nothing(&files)?;
    println!("wrote {} frames to {}", files.len(), a.output.display());
    Ok(())
}

fn rd_sweep(a: RdSweepArgs) -> anyhow::Result<()> {
    let (frames, synthetic_grid) = load_source(&a.source)?;
    let mut qs: Vec<f64> = Vec::new();
    for &q in &a.q_list {
        if qs.contains(&q) {
            warn!("duplicate Q value {q} ignored");
        } else {
            qs.push(q);
        }
    }
    qs.sort_by(f64::total_cmp);
    let points: usize = frames.iter().map(RawPointCloud::point_count).sum();
    let orig: Vec<[f64; 3]> = frames
        .iter()
        .flat_map(|f| f.colors.iter().map(|c| rgb_to_yuv(*c)))
        .collect();

    let mut w = tsv(Vec::new());
    w.write_record(["q", "bpip", "psnr_y", "psnr_u", "psnr_v", "mse"])?;
    let mut prev: Option<f64> = None;
    for &q in &qs {
        let config = a.codec.config(q, synthetic_grid);
        let enc =
            encode_sequence(&frames, &config, &a.codec.options()).with_context(|| format!("encoding at Q={q}"))?;
        let dec = decode_sequence(&enc.bitstream, &frames, &a.codec.options())
            .with_context(|| format!("decoding at Q={q}"))?;
        if dec.frames != enc.reconstruction {
            bail!("decoder output differs from the encoder reconstruction at Q={q}");
        }
        let recon: Vec<[f64; 3]> = dec
            .frames
            .iter()
            .flat_map(|f| f.colors.iter().map(|c| rgb_to_yuv(*c)))
            .collect();
        let mut mse = [0.0; 3];
        for (o, r) in orig.iter().zip(&recon) {
            for c in 0..3 {
                mse[c] += (o[c] - r[c]).powi(2) / orig.len() as f64;
            }
        }
        let rate = bpip(8 * enc.bitstream.len() as u64, points)?;
        if prev.is_some_and(|p| rate >= p) {
            warn!("rate did not decrease at Q={q} ({rate:.4} bits per input point)");
        }
        prev = Some(rate);
        info!("Q={q}: {rate:.4} bits per input point");
        w.write_record([
            q.to_string(),
            format!("{rate:.6}"),
            fmt_db(psnr_from_mse(mse[0], PEAK_8BIT)),
            fmt_db(psnr_from_mse(mse[1], PEAK_8BIT)),
            fmt_db(psnr_from_mse(mse[2], PEAK_8BIT)),
            format!("{:.6}", mse.iter().sum::<f64>() / 3.0),
        ])?;
    }
    let table = w.into_inner()?;
    write_all_or_nothing(&[(a.output.clone(), table.clone())])?;
    std::io::stdout().write_all(&table)?;
    Ok(())
}

fn report_lines(est: &PrecisionEstimate, r: &SimilarityReport) -> Vec<(&'static str, String)> {
    vec![
        ("points", est.precision.rows().to_string()),
        ("samples", est.sample_count.to_string()),
        ("rank_deficient", est.rank_deficient.to_string()),
        ("support_size", r.support_size.to_string()),
        ("sign_agreement", format!("{:.4}", r.sign_agreement)),
        ("support_correlation", format!("{:.4}", r.support_correlation)),
        ("offdiag_correlation", format!("{:.4}", r.offdiag_correlation)),
        ("sparsity_ratio", format!("{:.4}", r.sparsity_ratio)),
    ]
}

fn validate_gmrf(a: ValidateArgs) -> anyhow::Result<()> {
    let (est, report) = if a.frames.is_empty() {
        let roughness = i32::try_from(a.roughness).context("roughness too large")?;
        let patch = synthetic_patch(a.side, a.spacing, roughness, a.seed);
        let (_, est, report) = synthetic_precision_study(&patch, a.samples_per_node, a.epsilon2, a.sigma2, a.seed)?;
        (est, report)
    } else {
        let files = expand_inputs(&a.frames)?;
        let used = &files[..files.len().min(a.patches + 1)];
        let frames = load_frames(used)?;
        let grid = VoxelGrid::fit(&frames[0], a.grid_dim.unwrap_or(SequenceConfig::default().grid_dim))?;
        let voxelized = frames
            .iter()
            .map(|f| grid.voxelize(f))
            .collect::<crate::Result<Vec<_>>>()?;
        let config = SequenceConfig {
            epsilon_sq: a.epsilon2,
            sigma_sq: a.sigma2,
            normal_k: a.normal_k,
            box_expand: a.box_expand,
            ..SequenceConfig::default()
        };
        let (_, est, report) = dataset_precision_study(&voxelized, a.patch_size, &config)?;
        (est, report)
    };
    let mut w = tsv(Vec::new());
    for (k, v) in report_lines(&est, &report) {
        w.write_record([k, v.as_str()])?;
    }
    let table = w.into_inner()?;
    if let Some(out) = &a.output {
        write_all_or_nothing(&[(out.clone(), table.clone())])?;
    }
    std::io::stdout().write_all(&table)?;
    Ok(())
}

/// Reads `q`, `bpip` and `mse` columns from a tab-separated RD curve.
pub fn read_curve(path: &Path) -> anyhow::Result<Vec<RdSample>> {
    let mut r = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .with_context(|| format!("{} has no `{name}` column", path.display()))
    };
    let (qi, ri, di) = (col("q")?, col("bpip")?, col("mse")?);
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| -> anyhow::Result<f64> {
            rec.get(i)
                .unwrap_or("")
                .trim()
                .parse()
                .with_context(|| format!("{} row {}: bad number", path.display(), line + 2))
        };
        out.push(RdSample {
            q: field(qi)?,
            rate: field(ri)?,
            distortion: field(di)?,
        });
    }
    Ok(out)
}

fn fit_lambda(a: FitArgs) -> anyhow::Result<()> {
    let curve = read_curve(&a.curve)?;
    let model = fit_lambda_model(&curve)?;
    println!("alpha\t{:.6}", model.alpha);
    println!("beta\t{:.6}", model.beta);
    Ok(())
}

fn synth(a: SynthArgs) -> anyhow::Result<()> {
    let seq = generate(&SyntheticSpec {
        seed: a.seed,
        ..SyntheticSpec::new(a.kind, a.frames)
    })?;
    fs::create_dir_all(&a.output).with_context(|| format!("creating {}", a.output.display()))?;
    let files: Vec<(PathBuf, Vec<u8>)> = seq
        .frames
        .iter()
        .enumerate()
        .map(|(t, f)| {
            (
                a.output.join(format!("frame_{t:04}.ply")),
                encode_ply(f, PlyFormat::BinaryLittleEndian),
            )
        })
        .collect();
    write_all_or_nothing(&files)?;
    println!(
        "wrote {} frames to {}; encode them with --grid-dim {}",
        files.len(),
        a.output.display(),
        seq.grid_dim
    );
    Ok(())
}
