//! Refined motion estimation: collocated search box, rigid ICP and
//! point-to-point correspondence.
//!
//! Only geometry enters here, so the decoder recomputes the exact same
//! correspondences from the shared voxel positions.

use log::debug;

use crate::error::{Error, Result};
use crate::linalg::{jacobi_eigen, Matrix};
use crate::spatial::{KdTree, Point3};

pub const DEFAULT_ICP_MAX_ITER: usize = 30;
/// Minimum mean-squared residual improvement (grid units²) to keep iterating.
pub const DEFAULT_ICP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: Point3,
    pub max: Point3,
}

impl BoundingBox {
    /// Tight box around `points`; `None` if empty.
    pub fn around(points: &[Point3]) -> Option<Self> {
        let first = points.first()?;
        let mut b = BoundingBox {
            min: *first,
            max: *first,
        };
        for p in points {
            for a in 0..3 {
                b.min[a] = b.min[a].min(p[a]);
                b.max[a] = b.max[a].max(p[a]);
            }
        }
        Some(b)
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

/// Scales every side by `1 + delta` about the box center.
pub fn expand_box(b: &BoundingBox, delta: f64) -> BoundingBox {
    let mut out = *b;
    for a in 0..3 {
        let center = 0.5 * (b.min[a] + b.max[a]);
        let half = 0.5 * (b.max[a] - b.min[a]) * (1.0 + delta);
        out.min[a] = center - half;
        out.max[a] = center + half;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        let r = &self.rotation;
        [0, 1, 2].map(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + self.translation[i])
    }

    pub fn inverse(&self) -> Self {
        let r = &self.rotation;
        let rt = [0, 1, 2].map(|i| [r[0][i], r[1][i], r[2][i]]);
        let t = &self.translation;
        let ti = [0, 1, 2].map(|i| -(rt[i][0] * t[0] + rt[i][1] * t[1] + rt[i][2] * t[2]));
        RigidTransform {
            rotation: rt,
            translation: ti,
        }
    }

    pub fn determinant(&self) -> f64 {
        let r = &self.rotation;
        r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
    }

    /// Rotation angle in radians.
    pub fn angle(&self) -> f64 {
        let r = &self.rotation;
        ((r[0][0] + r[1][1] + r[2][2] - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

#[derive(Debug, Clone)]
pub struct IcpResult {
    pub transform: RigidTransform,
    /// Mean-squared nearest-neighbour residual before the first and after
    /// every iteration.
    pub residuals: Vec<f64>,
    /// Set when either side was degenerate and the identity was returned.
    pub fallback: bool,
}

/// Rigidly registers `source` onto `target`.
///
/// Each iteration matches every target point to its nearest transformed
/// source point (lowest index on ties), then solves the least-squares rigid
/// fit in closed form. The source may be much larger than the target (it is
/// an expanded search region), which is why matching runs from the target
/// side.
pub fn icp_register(source: &[Point3], target: &[Point3], max_iter: usize, tol: f64) -> Result<IcpResult> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::NoReferenceCandidates);
    }
    if is_degenerate(source) || is_degenerate(target) {
        debug!("ICP fallback: degenerate point set");
        return Ok(IcpResult {
            transform: RigidTransform::identity(),
            residuals: Vec::new(),
            fallback: true,
        });
    }
    let tree = KdTree::new(source);
    let mut transform = RigidTransform::identity();
    let (mut matches, mut residual) = match_targets(&tree, target, &transform);
    let mut residuals = vec![residual];
    for _ in 0..max_iter {
        let pairs: Vec<(Point3, Point3)> = matches.iter().zip(target).map(|(&j, t)| (source[j], *t)).collect();
        let candidate = fit_rigid(&pairs);
        let (new_matches, new_residual) = match_targets(&tree, target, &candidate);
        if new_residual > residual {
            break;
        }
        let improvement = residual - new_residual;
        transform = candidate;
        matches = new_matches;
        residual = new_residual;
        residuals.push(residual);
        if improvement < tol {
            break;
        }
    }
    Ok(IcpResult {
        transform,
        residuals,
        fallback: false,
    })
}

fn match_targets(tree: &KdTree, target: &[Point3], transform: &RigidTransform) -> (Vec<usize>, f64) {
    // |T s - t| = |s - T⁻¹ t| for rigid T, so the tree over the untransformed
    // source serves every iteration.
    let inv = transform.inverse();
    let mut total = 0.0;
    let matches = target
        .iter()
        .map(|t| {
            let (j, d2) = tree.nearest(&inv.apply(t)).expect("non-empty source");
            total += d2;
            j
        })
        .collect();
    (matches, total / target.len() as f64)
}

fn centroid(points: impl Iterator<Item = Point3>) -> Point3 {
    let mut sum = [0.0; 3];
    let mut n = 0usize;
    for p in points {
        for a in 0..3 {
            sum[a] += p[a];
        }
        n += 1;
    }
    sum.map(|s| s / n.max(1) as f64)
}

/// Fewer than three points, or all points on one line.
fn is_degenerate(points: &[Point3]) -> bool {
    if points.len() < 3 {
        return true;
    }
    let c = centroid(points.iter().copied());
    let mut cov = Matrix::zeros(3, 3);
    for p in points {
        let d = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
        for i in 0..3 {
            for j in 0..3 {
                cov[(i, j)] += d[i] * d[j];
            }
        }
    }
    let eig = jacobi_eigen(&cov).expect("covariance is symmetric");
    let largest = eig.values[2];
    largest <= 0.0 || eig.values[1] <= 1e-12 * largest
}

/// Least-squares rotation and translation mapping each `.0` onto its `.1`
/// (unit-quaternion solution of the cross-covariance problem).
pub fn fit_rigid(pairs: &[(Point3, Point3)]) -> RigidTransform {
    let cs = centroid(pairs.iter().map(|p| p.0));
    let ct = centroid(pairs.iter().map(|p| p.1));
    let mut s = [[0.0; 3]; 3];
    for (a, b) in pairs {
        let da = [a[0] - cs[0], a[1] - cs[1], a[2] - cs[2]];
        let db = [b[0] - ct[0], b[1] - ct[1], b[2] - ct[2]];
        for i in 0..3 {
            for j in 0..3 {
                s[i][j] += da[i] * db[j];
            }
        }
    }
    let [[sxx, sxy, sxz], [syx, syy, syz], [szx, szy, szz]] = s;
    let n = Matrix::from_rows(&[
        vec![sxx + syy + szz, syz - szy, szx - sxz, sxy - syx],
        vec![syz - szy, sxx - syy - szz, sxy + syx, szx + sxz],
        vec![szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy],
        vec![sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz],
    ])
    .expect("4x4");
    let eig = jacobi_eigen(&n).expect("symmetric 4x4");
    let q = eig.vectors.row(3);
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = [q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm];
    let rotation = [
        [
            w * w + x * x - y * y - z * z,
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            w * w - x * x + y * y - z * z,
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            w * w - x * x - y * y + z * z,
        ],
    ];
    let mut t = RigidTransform {
        rotation,
        translation: [0.0; 3],
    };
    let rc = t.apply(&cs);
    t.translation = [ct[0] - rc[0], ct[1] - rc[1], ct[2] - rc[2]];
    t
}

/// For every target point, the index of its nearest registered reference
/// point (lowest index on ties).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Correspondence {
    pub ref_index: Vec<usize>,
}

pub fn find_correspondence(cluster: &[Point3], registered_ref: &[Point3]) -> Result<Correspondence> {
    if registered_ref.is_empty() {
        return Err(Error::NoReferenceCandidates);
    }
    let tree = KdTree::new(registered_ref);
    let ref_index = cluster
        .iter()
        .map(|p| tree.nearest(p).expect("non-empty tree").0)
        .collect();
    Ok(Correspondence { ref_index })
}

/// Result of motion estimation for one cluster.
#[derive(Debug, Clone)]
pub struct ClusterMotion {
    /// Index into the previous frame's voxels for each cluster point.
    pub correspondence: Correspondence,
    pub icp: IcpResult,
    pub candidate_count: usize,
}

/// Registers the previous frame's collocated, expanded region onto
/// `cluster` and returns the per-point reference voxels.
pub fn estimate_cluster_motion(cluster: &[Point3], previous: &[Point3], box_expand: f64) -> Result<ClusterMotion> {
    let bbox = BoundingBox::around(cluster).ok_or(Error::EmptyFrame)?;
    let search = expand_box(&bbox, box_expand);
    let candidates: Vec<usize> = previous
        .iter()
        .enumerate()
        .filter(|(_, p)| search.contains(p))
        .map(|(i, _)| i)
        .collect();
    if candidates.is_empty() {
        return Err(Error::NoReferenceCandidates);
    }
    let source: Vec<Point3> = candidates.iter().map(|&i| previous[i]).collect();
    let icp = icp_register(&source, cluster, DEFAULT_ICP_MAX_ITER, DEFAULT_ICP_TOL)?;
    let registered: Vec<Point3> = source.iter().map(|p| icp.transform.apply(p)).collect();
    let local = find_correspondence(cluster, &registered)?;
    let ref_index = local.ref_index.iter().map(|&j| candidates[j]).collect();
    Ok(ClusterMotion {
        correspondence: Correspondence { ref_index },
        icp,
        candidate_count: candidates.len(),
    })
}
