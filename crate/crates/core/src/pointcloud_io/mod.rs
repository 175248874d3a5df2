//! Point cloud ingestion: PLY files, color conversion and voxelization.

pub mod color;
pub mod ply;
pub mod voxel;

pub use color::{centered_yuv_to_rgb, rgb_to_centered_yuv, rgb_to_yuv, yuv_to_rgb, MID_LEVEL};
pub use ply::{encode_ply, parse_ply, read_ply, write_ply, PlyFormat, RawPointCloud};
pub use voxel::{devoxelize, voxelize, VoxelGrid, VoxelizedFrame};
