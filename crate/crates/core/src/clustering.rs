//! Deterministic K-means partition of a voxelized frame.
//!
//! The decoder never receives cluster labels; it re-runs this on the shared
//! geometry. Everything is therefore a pure function of the voxel
//! coordinates: farthest-point seeding from the lexicographically smallest
//! voxel, exact integer centroid sums, fixed tie-breaks and a canonical
//! relabeling by each cluster's smallest member.

use crate::error::{Error, Result};

pub const MAX_LLOYD_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPartition {
    /// Cluster id of every voxel, in the caller's order.
    pub labels: Vec<usize>,
    pub k: usize,
    pub cluster_sizes: Vec<usize>,
    pub centroids: Vec<[f64; 3]>,
}

impl ClusterPartition {
    /// Member indices of every cluster, each list ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self.cluster_sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

pub fn cluster_count(n: usize, target_cluster_size: usize) -> usize {
    n.div_ceil(target_cluster_size.max(1))
}

pub fn kmeans_geometry(coords: &[[u32; 3]], target_cluster_size: usize) -> Result<ClusterPartition> {
    Ok(run_kmeans(coords, target_cluster_size)?.0)
}

/// Total squared distance from each point to its cluster centroid.
pub fn within_cluster_cost(coords: &[[u32; 3]], partition: &ClusterPartition) -> f64 {
    coords
        .iter()
        .zip(&partition.labels)
        .map(|(c, &l)| dist2(&to_f64(c), &partition.centroids[l]))
        .sum()
}

#[inline]
fn to_f64(c: &[u32; 3]) -> [f64; 3] {
    c.map(f64::from)
}

#[inline]
fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum()
}

#[inline]
fn idist2(a: &[u32; 3], b: &[u32; 3]) -> i64 {
    (0..3)
        .map(|i| {
            let d = i64::from(a[i]) - i64::from(b[i]);
            d * d
        })
        .sum()
}

/// Returns the partition and the cost after every Lloyd update.
pub(crate) fn run_kmeans(coords: &[[u32; 3]], target_cluster_size: usize) -> Result<(ClusterPartition, Vec<f64>)> {
    let n = coords.len();
    if n == 0 {
        return Err(Error::EmptyFrame);
    }
    if target_cluster_size == 0 {
        return Err(Error::InvalidParameter("target cluster size must be positive".into()));
    }
    let k = cluster_count(n, target_cluster_size);

    // Work in canonical (sorted) order so the input permutation is irrelevant.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| coords[a].cmp(&coords[b]).then(a.cmp(&b)));
    let pts: Vec<[u32; 3]> = order.iter().map(|&i| coords[i]).collect();
    let fpts: Vec<[f64; 3]> = pts.iter().map(to_f64).collect();

    let mut centroids = farthest_point_seeds(&pts, k);
    let mut labels = vec![usize::MAX; n];
    let mut costs = Vec::new();

    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        for (i, p) in fpts.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in centroids.iter().enumerate() {
                let d = dist2(p, c);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        if refill_empty_clusters(&fpts, &mut labels, &centroids, k) {
            changed = true;
        }
        centroids = exact_centroids(&pts, &labels, k);
        costs.push(fpts.iter().zip(&labels).map(|(p, &l)| dist2(p, &centroids[l])).sum());
        if !changed {
            break;
        }
    }

    // Canonical relabeling: clusters ordered by their smallest member, which
    // is the first member encountered in sorted order.
    let mut relabel = vec![usize::MAX; k];
    let mut next = 0;
    for &l in &labels {
        if relabel[l] == usize::MAX {
            relabel[l] = next;
            next += 1;
        }
    }
    let mut out_labels = vec![0usize; n];
    for (sorted_pos, &orig) in order.iter().enumerate() {
        out_labels[orig] = relabel[labels[sorted_pos]];
    }
    let mut sizes = vec![0usize; k];
    for &l in &out_labels {
        sizes[l] += 1;
    }
    let mut out_centroids = vec![[0.0; 3]; k];
    for (old, &new) in relabel.iter().enumerate() {
        out_centroids[new] = centroids[old];
    }
    Ok((
        ClusterPartition {
            labels: out_labels,
            k,
            cluster_sizes: sizes,
            centroids: out_centroids,
        },
        costs,
    ))
}

fn farthest_point_seeds(pts: &[[u32; 3]], k: usize) -> Vec<[f64; 3]> {
    let mut seeds = vec![pts[0]];
    let mut min_d: Vec<i64> = pts.iter().map(|p| idist2(p, &pts[0])).collect();
    while seeds.len() < k {
        // Strict `>` keeps the lexicographically smallest among ties.
        let mut best = 0;
        for (i, &d) in min_d.iter().enumerate() {
            if d > min_d[best] {
                best = i;
            }
        }
        let s = pts[best];
        seeds.push(s);
        for (m, p) in min_d.iter_mut().zip(pts) {
            *m = (*m).min(idist2(p, &s));
        }
    }
    seeds.iter().map(to_f64).collect()
}

/// Moves, for every empty cluster, the point farthest from its own centroid
/// into it. Returns whether anything moved.
fn refill_empty_clusters(fpts: &[[f64; 3]], labels: &mut [usize], centroids: &[[f64; 3]], k: usize) -> bool {
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    let mut moved = false;
    for empty in 0..k {
        if sizes[empty] != 0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in fpts.iter().enumerate() {
            if sizes[labels[i]] <= 1 {
                continue;
            }
            let d = dist2(p, &centroids[labels[i]]);
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        if let Some((i, _)) = best {
            sizes[labels[i]] -= 1;
            labels[i] = empty;
            sizes[empty] = 1;
            moved = true;
        }
    }
    moved
}

fn exact_centroids(pts: &[[u32; 3]], labels: &[usize], k: usize) -> Vec<[f64; 3]> {
    let mut sums = vec![[0i64; 3]; k];
    let mut counts = vec![0i64; k];
    for (p, &l) in pts.iter().zip(labels) {
        for a in 0..3 {
            sums[l][a] += i64::from(p[a]);
        }
        counts[l] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &c)| {
            if c == 0 {
                [f64::NAN; 3]
            } else {
                s.map(|v| v as f64 / c as f64)
            }
        })
        .collect()
}
