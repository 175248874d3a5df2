//! Voxelization onto a shared `N³` grid and the inverse attribute mapping.

use log::warn;

use super::color::rgb_to_centered_yuv;
use super::ply::RawPointCloud;
use crate::error::{Error, Result};

/// Fraction of the bounding-box extent added on every side before scaling.
const BOX_MARGIN: f64 = 0.05;

/// Affine map from source coordinates to voxel indices, fitted once per
/// sequence on its first frame so that all frames share one scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelGrid {
    pub origin: [f64; 3],
    /// Voxels per source unit; zero for a degenerate (single-location) box.
    pub scale: f64,
    pub dim: u32,
}

impl VoxelGrid {
    pub fn fit(reference: &RawPointCloud, dim: u32) -> Result<Self> {
        if reference.point_count() == 0 {
            return Err(Error::EmptyFrame);
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("grid dimension must be positive".into()));
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &reference.positions {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
        if extent <= 0.0 {
            warn!("degenerate bounding box: all points coincide, mapping to a single voxel");
            return Ok(VoxelGrid {
                origin: lo,
                scale: 0.0,
                dim,
            });
        }
        let margin = extent * BOX_MARGIN;
        let origin = lo.map(|v| v - margin);
        let scale = (dim - 1) as f64 / (extent + 2.0 * margin);
        Ok(VoxelGrid { origin, scale, dim })
    }

    /// Continuous grid coordinates of a source point.
    pub fn to_grid(&self, p: &[f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|a| (p[a] - self.origin[a]) * self.scale)
    }

    pub fn voxel_of(&self, p: &[f64; 3]) -> [u32; 3] {
        let max = (self.dim - 1) as f64;
        self.to_grid(p).map(|g| g.floor().clamp(0.0, max) as u32)
    }

    pub fn voxelize(&self, raw: &RawPointCloud) -> Result<VoxelizedFrame> {
        if raw.point_count() == 0 {
            return Err(Error::EmptyFrame);
        }
        let cells: Vec<[u32; 3]> = raw.positions.iter().map(|p| self.voxel_of(p)).collect();
        let mut order: Vec<usize> = (0..cells.len()).collect();
        order.sort_by(|&a, &b| cells[a].cmp(&cells[b]).then(a.cmp(&b)));

        let mut coords: Vec<[u32; 3]> = Vec::new();
        let mut attributes: Vec<[f64; 3]> = Vec::new();
        let mut point_map = vec![0usize; cells.len()];
        let mut sum = [0.0f64; 3];
        let mut count = 0usize;
        for (pos, &i) in order.iter().enumerate() {
            if pos == 0 || cells[i] != cells[order[pos - 1]] {
                if count > 0 {
                    attributes.push(sum.map(|s| s / count as f64));
                }
                coords.push(cells[i]);
                sum = [0.0; 3];
                count = 0;
            }
            let yuv = rgb_to_centered_yuv(raw.colors[i]);
            for c in 0..3 {
                sum[c] += yuv[c];
            }
            count += 1;
            point_map[i] = coords.len() - 1;
        }
        attributes.push(sum.map(|s| s / count as f64));
        Ok(VoxelizedFrame {
            coords,
            attributes,
            grid_dim: self.dim,
            point_map,
        })
    }
}

/// One frame on the voxel grid. Voxels are unique and sorted
/// lexicographically by coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelizedFrame {
    pub coords: Vec<[u32; 3]>,
    /// Mid-level-centered YUV per voxel.
    pub attributes: Vec<[f64; 3]>,
    pub grid_dim: u32,
    /// Voxel index of every original point.
    pub point_map: Vec<usize>,
}

impl VoxelizedFrame {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.coords.iter().map(|c| c.map(f64::from)).collect()
    }

    /// 64-bit FNV-1a over the sorted voxel coordinates (little-endian u32s).
    pub fn geometry_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for c in &self.coords {
            for v in c {
                for byte in v.to_le_bytes() {
                    h ^= u64::from(byte);
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }
}

/// Voxelizes a frame on a grid fitted to itself.
pub fn voxelize(raw: &RawPointCloud, dim: u32) -> Result<VoxelizedFrame> {
    VoxelGrid::fit(raw, dim)?.voxelize(raw)
}

/// Gives every original point the attribute of its voxel.
pub fn devoxelize(attributes: &[[f64; 3]], point_map: &[usize], raw_count: usize) -> Result<Vec<[f64; 3]>> {
    if point_map.len() < raw_count {
        return Err(Error::DimensionMismatch {
            expected: raw_count,
            actual: point_map.len(),
        });
    }
    point_map[..raw_count]
        .iter()
        .map(|&v| {
            attributes.get(v).copied().ok_or(Error::IndexOutOfRange {
                index: v,
                len: attributes.len(),
            })
        })
        .collect()
}
