//! Intra-cluster graphs: normal estimation, ε-neighborhood graphs weighted
//! by normal similarity, and their (generalized) Laplacians.

use log::debug;

use crate::linalg::{jacobi_eigen, Matrix};
use crate::spatial::{KdTree, Point3};

#[derive(Debug, Clone, PartialEq)]
pub struct NormalField {
    pub normals: Vec<Point3>,
    /// Set when the cluster was too small to estimate normals and every
    /// normal defaulted to +z.
    pub degenerate: bool,
}

/// Per-point surface normal from the covariance of its `k` nearest
/// neighbours (the point itself included).
///
/// The normal is the eigenvector of the smallest covariance eigenvalue,
/// oriented so that its largest-magnitude component is positive.
pub fn estimate_normals(points: &[Point3], k: usize) -> NormalField {
    let n = points.len();
    if n < 3 {
        debug!("normal estimation on {n} points: defaulting to +z");
        return NormalField {
            normals: vec![[0.0, 0.0, 1.0]; n],
            degenerate: true,
        };
    }
    let k = k.max(3).min(n);
    let tree = KdTree::new(points);
    let normals = points
        .iter()
        .map(|p| {
            let nbrs = tree.k_nearest(p, k);
            let mut mean = [0.0; 3];
            for &(j, _) in &nbrs {
                for a in 0..3 {
                    mean[a] += points[j][a];
                }
            }
            let mean = mean.map(|m| m / nbrs.len() as f64);
            let mut cov = Matrix::zeros(3, 3);
            for &(j, _) in &nbrs {
                let d = [0, 1, 2].map(|a| points[j][a] - mean[a]);
                for r in 0..3 {
                    for c in 0..3 {
                        cov[(r, c)] += d[r] * d[c];
                    }
                }
            }
            let eig = jacobi_eigen(&cov).expect("3x3 covariance is symmetric");
            orient(eig.vectors.row(0))
        })
        .collect();
    NormalField {
        normals,
        degenerate: false,
    }
}

fn orient(v: &[f64]) -> Point3 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut out = [v[0] / norm, v[1] / norm, v[2] / norm];
    let mut big = 0;
    for a in 1..3 {
        if out[a].abs() > out[big].abs() {
            big = a;
        }
    }
    if out[big] < 0.0 {
        out = out.map(|x| -x);
    }
    out
}

/// Undirected weighted graph with edges stored once as `(i, j, w)`, `i < j`,
/// sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
    pub epsilon_sq: f64,
    pub sigma_sq: f64,
}

impl SpatialGraph {
    pub fn edgeless(n: usize) -> Self {
        SpatialGraph {
            n,
            edges: Vec::new(),
            epsilon_sq: 0.0,
            sigma_sq: 1.0,
        }
    }

    pub fn mean_degree(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            2.0 * self.edges.len() as f64 / self.n as f64
        }
    }
}

/// Edge weight `exp(-(sin θ)² / σ²)` between two unit normals; `sin θ` is
/// the norm of their cross product, so flipping either normal has no effect.
pub fn normal_weight(a: &Point3, b: &Point3, sigma_sq: f64) -> f64 {
    let c = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    let sin2 = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).min(1.0);
    (-sin2 / sigma_sq).exp()
}

/// Connects every pair with squared distance `<= epsilon_sq`.
pub fn build_epsilon_graph(points: &[Point3], normals: &NormalField, epsilon_sq: f64, sigma_sq: f64) -> SpatialGraph {
    assert_eq!(points.len(), normals.normals.len(), "one normal per point");
    let tree = KdTree::new(points);
    let mut edges = Vec::new();
    for (i, p) in points.iter().enumerate() {
        for j in tree.within(p, epsilon_sq) {
            if j > i {
                let w = normal_weight(&normals.normals[i], &normals.normals[j], sigma_sq);
                edges.push((i, j, w));
            }
        }
    }
    SpatialGraph {
        n: points.len(),
        edges,
        epsilon_sq,
        sigma_sq,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaplacianKind {
    /// `L = D - W`
    Combinatorial,
    /// `L + I`: unit temporal edges to the reference frame as a potential.
    Generalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedLaplacian {
    pub matrix: Matrix,
    pub kind: LaplacianKind,
}

impl GeneralizedLaplacian {
    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }
}

pub fn combinatorial_laplacian(g: &SpatialGraph) -> GeneralizedLaplacian {
    let mut m = Matrix::zeros(g.n, g.n);
    for &(i, j, w) in &g.edges {
        m[(i, j)] -= w;
        m[(j, i)] -= w;
        m[(i, i)] += w;
        m[(j, j)] += w;
    }
    GeneralizedLaplacian {
        matrix: m,
        kind: LaplacianKind::Combinatorial,
    }
}

pub fn generalized_laplacian(l: &GeneralizedLaplacian) -> GeneralizedLaplacian {
    debug_assert_eq!(l.kind, LaplacianKind::Combinatorial);
    let mut m = l.matrix.clone();
    m.add_diagonal(1.0);
    GeneralizedLaplacian {
        matrix: m,
        kind: LaplacianKind::Generalized,
    }
}
