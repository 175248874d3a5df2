//! Static 3-D kd-tree with deterministic tie-breaking.
//!
//! All queries order candidates by `(squared distance, point index)`, so the
//! result never depends on tree layout and always matches a brute-force
//! scan.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

pub type Point3 = [f64; 3];

#[inline]
pub fn dist2(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point3>,
    order: Vec<usize>,
    root: Node,
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    pub fn new(points: &[Point3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let root = build(points, &mut order, 0, points.len());
        KdTree {
            points: points.to_vec(),
            order,
            root,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    /// Index and squared distance of the nearest point; ties go to the lowest
    /// index. `None` for an empty tree.
    pub fn nearest(&self, q: &Point3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = Candidate {
            d2: f64::INFINITY,
            index: usize::MAX,
        };
        self.nearest_in(&self.root, q, &mut best);
        Some((best.index, best.d2))
    }

    fn nearest_in(&self, node: &Node, q: &Point3, best: &mut Candidate) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    let c = Candidate {
                        d2: dist2(q, &self.points[i]),
                        index: i,
                    };
                    if c < *best {
                        *best = c;
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[*axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.nearest_in(near, q, best);
                // `<=` keeps equal-distance points on the far side eligible
                // for the index tie-break.
                if diff * diff <= best.d2 {
                    self.nearest_in(far, q, best);
                }
            }
        }
    }

    /// The `k` nearest points ordered by `(distance, index)`.
    pub fn k_nearest(&self, q: &Point3, k: usize) -> Vec<(usize, f64)> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_in(&self.root, q, k, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter().map(|c| (c.index, c.d2)).collect()
    }

    fn knn_in(&self, node: &Node, q: &Point3, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    let c = Candidate {
                        d2: dist2(q, &self.points[i]),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("non-empty heap") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[*axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.knn_in(near, q, k, heap);
                let bound = if heap.len() < k {
                    f64::INFINITY
                } else {
                    heap.peek().map_or(f64::INFINITY, |c| c.d2)
                };
                if diff * diff <= bound {
                    self.knn_in(far, q, k, heap);
                }
            }
        }
    }

    /// All points with squared distance `<= r2`, ascending by index.
    pub fn within(&self, q: &Point3, r2: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.points.is_empty() {
            self.within_in(&self.root, q, r2, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn within_in(&self, node: &Node, q: &Point3, r2: f64, out: &mut Vec<usize>) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    if dist2(q, &self.points[i]) <= r2 {
                        out.push(i);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[*axis] - value;
                if diff <= 0.0 || diff * diff <= r2 {
                    self.within_in(left, q, r2, out);
                }
                if diff > 0.0 || diff * diff <= r2 {
                    self.within_in(right, q, r2, out);
                }
            }
        }
    }
}

fn build(points: &[Point3], order: &mut [usize], start: usize, end: usize) -> Node {
    if end - start <= LEAF_SIZE {
        return Node::Leaf { start, end };
    }
    let slice = &mut order[start..end];
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in slice.iter() {
        for a in 0..3 {
            lo[a] = lo[a].min(points[i][a]);
            hi[a] = hi[a].max(points[i][a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
        .unwrap_or(0);
    if hi[axis] <= lo[axis] {
        // All points coincide.
        return Node::Leaf { start, end };
    }
    slice.sort_unstable_by(|&a, &b| points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b)));
    let mid = slice.len() / 2;
    let value = points[slice[mid - 1]][axis];
    // Left holds every point with coordinate <= value.
    let mut split = mid;
    while split < slice.len() && points[slice[split]][axis] <= value {
        split += 1;
    }
    if split == slice.len() {
        return Node::Leaf { start, end };
    }
    let split = start + split;
    let left = build(points, order, start, split);
    let right = build(points, order, split, end);
    Node::Split {
        axis,
        value,
        left: Box::new(left),
        right: Box::new(right),
    }
}

/// Brute-force nearest neighbour with the same `(distance, index)` order.
pub fn brute_force_nearest(points: &[Point3], q: &Point3) -> Option<(usize, f64)> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| (i, dist2(q, p)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nearest_matches_brute_force_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // Integer lattice points guarantee many exact distance ties.
        let pts: Vec<Point3> = (0..400)
            .map(|_| {
                [
                    rng.random_range(0..10) as f64,
                    rng.random_range(0..10) as f64,
                    rng.random_range(0..4) as f64,
                ]
            })
            .collect();
        let tree = KdTree::new(&pts);
        for _ in 0..500 {
            let q = [
                rng.random_range(-2..12) as f64 + 0.5,
                rng.random_range(-2..12) as f64,
                rng.random_range(0..4) as f64 + 0.5,
            ];
            assert_eq!(tree.nearest(&q), brute_force_nearest(&pts, &q));
        }
    }

    #[test]
    fn knn_and_radius_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Point3> = (0..300)
            .map(|_| [rng.random_range(0..8) as f64, rng.random_range(0..8) as f64, 0.0])
            .collect();
        let tree = KdTree::new(&pts);
        for _ in 0..100 {
            let q = [rng.random_range(0..8) as f64, rng.random_range(0..8) as f64, 0.0];
            let mut all: Vec<(usize, f64)> = pts.iter().enumerate().map(|(i, p)| (i, dist2(&q, p))).collect();
            all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            assert_eq!(tree.k_nearest(&q, 15), all[..15].to_vec());
            let expect: Vec<usize> = {
                let mut v: Vec<usize> = all.iter().filter(|c| c.1 <= 5.0).map(|c| c.0).collect();
                v.sort_unstable();
                v
            };
            assert_eq!(tree.within(&q, 5.0), expect);
        }
    }

    #[test]
    fn empty_and_duplicate_sets() {
        assert!(KdTree::new(&[]).nearest(&[0.0; 3]).is_none());
        let pts = vec![[1.0, 1.0, 1.0]; 50];
        let tree = KdTree::new(&pts);
        assert_eq!(tree.nearest(&[0.0; 3]), Some((0, 3.0)));
        assert_eq!(tree.k_nearest(&[0.0; 3], 3).len(), 3);
    }
}
