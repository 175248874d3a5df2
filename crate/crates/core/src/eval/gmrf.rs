//! Gaussian Markov random field tools: sampling from a precision matrix and
//! estimating a precision matrix back from samples.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::SequenceConfig;
use crate::error::{Error, Result};
use crate::graph::{build_epsilon_graph, combinatorial_laplacian, estimate_normals, generalized_laplacian};
use crate::linalg::{symmetric_pinv, Cholesky, Matrix};
use crate::motion::estimate_cluster_motion;
use crate::pointcloud_io::VoxelizedFrame;
use crate::spatial::{KdTree, Point3};

/// Zero-mean samples with covariance `precision⁻¹`.
///
/// With `precision = G Gᵀ`, `x = G⁻ᵀ z` for standard normal `z`.
pub fn sample_gmrf(precision: &Matrix, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let chol = Cholesky::new(precision)?;
    let n = chol.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            chol.solve_upper(&z)
        })
        .collect())
}

/// Mean-removed sample covariance (divisor `count − 1`).
pub fn sample_covariance(samples: &[Vec<f64>]) -> Result<Matrix> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 samples, got {}",
            samples.len()
        )));
    }
    let n = samples[0].len();
    if let Some(bad) = samples.iter().find(|s| s.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: bad.len(),
        });
    }
    let m = samples.len() as f64;
    let mean: Vec<f64> = (0..n).map(|i| samples.iter().map(|s| s[i]).sum::<f64>() / m).collect();
    let mut cov = Matrix::zeros(n, n);
    for s in samples {
        let d: Vec<f64> = s.iter().zip(&mean).map(|(a, b)| a - b).collect();
        for i in 0..n {
            let row = cov.row_mut(i);
            for j in 0..n {
                row[j] += d[i] * d[j];
            }
        }
    }
    for i in 0..n {
        for v in cov.row_mut(i) {
            *v /= m - 1.0;
        }
    }
    Ok(cov)
}

#[derive(Debug, Clone)]
pub struct PrecisionEstimate {
    pub precision: Matrix,
    pub sample_count: usize,
    /// Set when the covariance was singular and a pseudo-inverse was used.
    pub rank_deficient: bool,
}

pub fn empirical_precision(samples: &[Vec<f64>]) -> Result<PrecisionEstimate> {
    let cov = sample_covariance(samples)?;
    let (precision, rank_deficient) = symmetric_pinv(&cov)?;
    Ok(PrecisionEstimate {
        precision,
        sample_count: samples.len(),
        rank_deficient,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityReport {
    /// Share of the Laplacian's off-diagonal support where the estimate has
    /// the same sign.
    pub sign_agreement: f64,
    /// Pearson correlation of estimate and Laplacian over the off-diagonal
    /// entries on the Laplacian's support (edges).
    pub support_correlation: f64,
    /// Pearson correlation over all off-diagonal entries, edges and
    /// non-edges alike.
    pub offdiag_correlation: f64,
    /// Share of the estimate's off-diagonal energy that falls on the
    /// Laplacian's support.
    pub sparsity_ratio: f64,
    pub support_size: usize,
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        f64::NAN
    } else {
        sab / (saa * sbb).sqrt()
    }
}

pub fn compare_to_laplacian(estimate: &PrecisionEstimate, laplacian: &Matrix) -> Result<SimilarityReport> {
    let n = laplacian.rows();
    if estimate.precision.rows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: estimate.precision.rows(),
        });
    }
    let (mut on_est, mut on_lap, mut all_est, mut all_lap) = (vec![], vec![], vec![], vec![]);
    let mut agree = 0usize;
    let (mut e_on, mut e_all) = (0.0, 0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let (e, l) = (estimate.precision[(i, j)], laplacian[(i, j)]);
            all_est.push(e);
            all_lap.push(l);
            e_all += e * e;
            if l != 0.0 {
                on_est.push(e);
                on_lap.push(l);
                e_on += e * e;
                if e.signum() == l.signum() {
                    agree += 1;
                }
            }
        }
    }
    let support_size = on_lap.len();
    Ok(SimilarityReport {
        sign_agreement: if support_size == 0 {
            f64::NAN
        } else {
            agree as f64 / support_size as f64
        },
        support_correlation: pearson(&on_est, &on_lap),
        offdiag_correlation: pearson(&all_est, &all_lap),
        sparsity_ratio: if e_all == 0.0 { f64::NAN } else { e_on / e_all },
        support_size,
    })
}

/// A rough voxelized surface patch: a `side × side` lattice with the given
/// spacing whose height is a smooth bump plus integer jitter of up to
/// `roughness` voxels, as produced by scanning and voxelizing a real
/// surface.
pub fn synthetic_patch(side: usize, spacing: f64, roughness: i32, seed: u64) -> Vec<Point3> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extent = side as f64 * spacing;
    let mut pts = Vec::with_capacity(side * side);
    for i in 0..side {
        for j in 0..side {
            let (x, y) = (i as f64 * spacing, j as f64 * spacing);
            let bump = 0.1 * extent * (3.0 * x / extent).sin() * (2.0 * y / extent).cos();
            let jitter = rng.random_range(-roughness..=roughness);
            pts.push([x, y, bump.round() + f64::from(jitter)]);
        }
    }
    pts
}

/// The precision-matrix study on synthetic patch data: builds the
/// generalized Laplacian of a surface patch, draws `samples_per_node · n`
/// GMRF samples from it, and compares the estimated precision with it.
pub fn synthetic_precision_study(
    patch: &[Point3],
    samples_per_node: usize,
    epsilon_sq: f64,
    sigma_sq: f64,
    seed: u64,
) -> Result<(Matrix, PrecisionEstimate, SimilarityReport)> {
    let pts = patch;
    let normals = estimate_normals(pts, 15);
    let graph = build_epsilon_graph(pts, &normals, epsilon_sq, sigma_sq);
    let gl = generalized_laplacian(&combinatorial_laplacian(&graph)).matrix;
    let samples = sample_gmrf(&gl, samples_per_node * pts.len(), seed)?;
    let est = empirical_precision(&samples)?;
    let report = compare_to_laplacian(&est, &gl)?;
    Ok((gl, est, report))
}

/// The precision-matrix study on real frames.
///
/// A patch of `patch_size` voxels around the centroid of the first frame is
/// followed through `frames` by motion estimation; the luma of the
/// corresponding voxels in each frame gives one sample, ordered like the
/// patch points. The estimate is compared with the generalized Laplacian of
/// the first frame's patch.
pub fn dataset_precision_study(
    frames: &[VoxelizedFrame],
    patch_size: usize,
    config: &SequenceConfig,
) -> Result<(Matrix, PrecisionEstimate, SimilarityReport)> {
    if frames.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "the precision study needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    let first = frames[0].positions();
    if first.is_empty() {
        return Err(Error::EmptyFrame);
    }
    let n = first.len() as f64;
    let centroid = [0, 1, 2].map(|a| first.iter().map(|p| p[a]).sum::<f64>() / n);
    let tree = KdTree::new(&first);
    let (anchor, _) = tree.nearest(&centroid).ok_or(Error::EmptyFrame)?;
    let mut members: Vec<usize> = tree
        .k_nearest(&first[anchor], patch_size.max(2))
        .into_iter()
        .map(|(i, _)| i)
        .collect();
    members.sort_unstable();
    let patch: Vec<Point3> = members.iter().map(|&i| first[i]).collect();

    let mut samples = vec![members
        .iter()
        .map(|&i| frames[0].attributes[i][0])
        .collect::<Vec<f64>>()];
    for f in &frames[1..] {
        let motion = estimate_cluster_motion(&patch, &f.positions(), config.box_expand)?;
        samples.push(
            motion
                .correspondence
                .ref_index
                .iter()
                .map(|&i| f.attributes[i][0])
                .collect(),
        );
    }
    let normals = estimate_normals(&patch, config.normal_k);
    let graph = build_epsilon_graph(&patch, &normals, config.epsilon_sq, config.sigma_sq);
    let gl = generalized_laplacian(&combinatorial_laplacian(&graph)).matrix;
    let est = empirical_precision(&samples)?;
    let report = compare_to_laplacian(&est, &gl)?;
    Ok((gl, est, report))
}
