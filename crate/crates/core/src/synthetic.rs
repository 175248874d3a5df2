//! Seeded synthetic sequences, so the codec can be exercised without
//! external datasets.
//!
//! Content is a curved sheet sampled on a regular lattice (5 voxels apart
//! along x, 4 along y) carrying a smooth color pattern plus a little noise.
//! The lattice is placed so that, with [`SyntheticSequence::grid_dim`],
//! voxelization maps every point to an exact integer voxel: the first
//! frame's x extent `E` satisfies `E ≡ 10 (mod 20)` and the grid has
//! `1.1·E + 1` cells per axis.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pointcloud_io::RawPointCloud;

const X_SPACING: f64 = 5.0;
const Y_SPACING: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Identical frames.
    Static,
    /// The sheet translates by [`RIGID_STEP`] voxels per frame, colors
    /// attached to the surface.
    RigidMotion,
    /// Fixed geometry; a traveling wave modulates the colors over time.
    Wave,
}

/// Per-frame translation of the rigid-motion sequence, in voxels.
pub const RIGID_STEP: [f64; 3] = [0.0, 2.0, 1.0];

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(SyntheticKind::Static),
            "rigid-motion" => Ok(SyntheticKind::RigidMotion),
            "wave" => Ok(SyntheticKind::Wave),
            _ => Err(Error::InvalidParameter(format!(
                "unknown synthetic sequence `{s}` (expected wave, static or rigid-motion)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub frames: usize,
    /// Lattice columns along x; rounded up to the next count with `E ≡ 10 (mod 20)`.
    pub columns: usize,
    pub rows: usize,
    /// Amplitude of the per-point color noise (uniform, in 8-bit levels).
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, frames: usize) -> Self {
        SyntheticSpec {
            kind,
            frames,
            columns: 47,
            rows: 52,
            noise: 2.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub frames: Vec<RawPointCloud>,
    /// Grid resolution that voxelizes the lattice without rounding.
    pub grid_dim: u32,
    /// Translation of every frame relative to the first.
    pub translations: Vec<[f64; 3]>,
}

fn height(x: f64, y: f64, ex: f64, ey: f64) -> f64 {
    (0.08 * ex * (PI * x / ex).sin() * (1.5 * PI * y / ey).cos()).round()
}

fn base_color(x: f64, y: f64, ex: f64, ey: f64, phase: f64) -> [f64; 3] {
    let u = x / ex;
    let v = y / ey;
    [
        128.0 + 70.0 * (2.0 * PI * (1.2 * u + 0.3 * v) - phase).sin(),
        120.0 + 55.0 * (2.0 * PI * (0.8 * v - 0.4 * u)).cos(),
        110.0 + 40.0 * (2.0 * PI * (u * v + 0.5 * u) + 0.5 * phase).sin(),
    ]
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticSequence> {
    if spec.frames == 0 || spec.columns < 2 || spec.rows < 2 {
        return Err(Error::InvalidParameter(
            "synthetic sequences need ≥ 1 frame and a lattice of at least 2×2".into(),
        ));
    }
    // (columns − 1)·5 ≡ 10 (mod 20)  ⇔  columns ≡ 3 (mod 4)
    let columns = spec.columns + (3 + 4 - spec.columns % 4) % 4;
    let ex = (columns - 1) as f64 * X_SPACING;
    let ey = (spec.rows - 1) as f64 * Y_SPACING;
    if ey >= ex {
        return Err(Error::InvalidParameter(format!(
            "synthetic lattice must be wider than tall ({columns} columns, {} rows)",
            spec.rows
        )));
    }
    let grid_dim = (1.1 * ex).round() as u32 + 1;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut lattice = Vec::with_capacity(columns * spec.rows);
    let mut noise = Vec::with_capacity(columns * spec.rows);
    for i in 0..columns {
        for j in 0..spec.rows {
            let (x, y) = (i as f64 * X_SPACING, j as f64 * Y_SPACING);
            lattice.push([x, y, height(x, y, ex, ey)]);
            noise.push([0; 3].map(|_: i32| rng.random_range(-spec.noise..=spec.noise)));
        }
    }
    // The height field spans less than the x extent, so x stays the largest
    // axis of the first frame.
    debug_assert!(lattice.iter().all(|p| p[2].abs() < 0.5 * ex));

    let mut frames = Vec::with_capacity(spec.frames);
    let mut translations = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let shift = match spec.kind {
            SyntheticKind::RigidMotion => RIGID_STEP.map(|s| s * t as f64),
            _ => [0.0; 3],
        };
        let phase = match spec.kind {
            SyntheticKind::Wave => 0.35 * t as f64,
            _ => 0.0,
        };
        let positions = lattice.iter().map(|p| [0, 1, 2].map(|a| p[a] + shift[a])).collect();
        let colors = lattice
            .iter()
            .zip(&noise)
            .map(|(p, n)| {
                let c = base_color(p[0], p[1], ex, ey, phase);
                [0, 1, 2].map(|a| (c[a] + n[a]).round().clamp(0.0, 255.0) as u8)
            })
            .collect();
        frames.push(RawPointCloud::new(positions, colors)?);
        translations.push(shift);
    }
    Ok(SyntheticSequence {
        frames,
        grid_dim,
        translations,
    })
}
