//! Attribute codec for dynamic point cloud sequences.
//!
//! Each frame is voxelized, split into geometry clusters, and every cluster
//! is coded either intra (a graph Fourier transform on a normal-weighted
//! graph) or inter (a GMRF-optimal prediction from the motion-compensated
//! previous frame followed by a generalized GFT of the residual). The mode
//! is picked per cluster by rate-distortion optimization.

pub mod cli;
pub mod clustering;
pub mod codec;
pub mod coding;
pub mod config;
pub mod error;
pub mod eval;
pub mod graph;
pub mod linalg;
pub mod motion;
pub mod pointcloud_io;
pub mod rdo;
pub mod spatial;
pub mod synthetic;
pub mod transform;

pub use config::SequenceConfig;
pub use error::{Error, Result};
