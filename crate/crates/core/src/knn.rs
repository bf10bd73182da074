//! Exact k-nearest-neighbor search over the measured points of a cloud.
//!
//! Static KD-tree with bounding boxes per node. Results are ordered by
//! `(squared distance, pixel index)`, so equidistant points resolve to the
//! lower row-major pixel index and queries agree with an exhaustive scan.

use std::cmp::Ordering;

use crate::camera::PointCloud;
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 8;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NeighborSet {
    /// Pixel indices, nearest first.
    pub indices: Vec<usize>,
    /// Euclidean distances in meters, nondecreasing.
    pub distances: Vec<f64>,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Clone, Debug)]
struct Node {
    lo: [f64; 3],
    hi: [f64; 3],
    kind: NodeKind,
}

#[derive(Clone, Debug)]
enum NodeKind {
    Leaf { start: usize, end: usize },
    Split { left: usize, right: usize },
}

#[derive(Clone, Debug)]
pub struct SpatialIndex {
    points: Vec<[f64; 3]>,
    ids: Vec<usize>,
    order: Vec<usize>,
    nodes: Vec<Node>,
    root: usize,
}

#[inline]
pub(crate) fn squared_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
fn rank(a: (f64, usize), b: (f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

impl SpatialIndex {
    /// Indexes the measured points of `cloud`.
    pub fn build(cloud: &PointCloud) -> Result<Self> {
        let (points, ids): (Vec<[f64; 3]>, Vec<usize>) = cloud
            .points()
            .iter()
            .enumerate()
            .filter(|(i, _)| cloud.is_measured(*i))
            .map(|(i, p)| (*p, i))
            .unzip();
        if points.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let mut index = SpatialIndex {
            order: (0..points.len()).collect(),
            points,
            ids,
            nodes: Vec::new(),
            root: 0,
        };
        index.root = index.build_node(0, index.order.len());
        Ok(index)
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &o in &self.order[start..end] {
            let p = self.points[o];
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let kind = if end - start <= LEAF_SIZE {
            NodeKind::Leaf { start, end }
        } else {
            let axis = (0..3)
                .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
                .unwrap_or(0);
            let mid = (end - start) / 2;
            let points = &self.points;
            self.order[start..end].select_nth_unstable_by(mid, |&a, &b| {
                points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
            });
            let left = self.build_node(start, start + mid);
            let right = self.build_node(start + mid, end);
            NodeKind::Split { left, right }
        };
        self.nodes.push(Node { lo, hi, kind });
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `min(k, len)` nearest measured points to `query`.
    pub fn knn(&self, query: [f64; 3], k: usize) -> Result<NeighborSet> {
        if k == 0 {
            return Err(Error::Value("k must be at least 1".into()));
        }
        let k = k.min(self.points.len());
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        self.search(self.root, query, k, &mut best);
        Ok(NeighborSet {
            indices: best.iter().map(|&(_, id)| id).collect(),
            distances: best.iter().map(|&(d2, _)| d2.sqrt()).collect(),
        })
    }

    #[allow(clippy::needless_range_loop)]
    fn search(&self, node: usize, q: [f64; 3], k: usize, best: &mut Vec<(f64, usize)>) {
        let n = &self.nodes[node];
        if best.len() == k {
            let mut box_d2 = 0.0;
            for a in 0..3 {
                let d = if q[a] < n.lo[a] {
                    n.lo[a] - q[a]
                } else if q[a] > n.hi[a] {
                    q[a] - n.hi[a]
                } else {
                    0.0
                };
                box_d2 += d * d;
            }
            // Equal distance must still be visited: a lower pixel index wins ties.
            if box_d2 > best[k - 1].0 {
                return;
            }
        }
        match n.kind {
            NodeKind::Leaf { start, end } => {
                for &o in &self.order[start..end] {
                    let cand = (squared_distance(self.points[o], q), self.ids[o]);
                    if best.len() == k && rank(cand, best[k - 1]) != Ordering::Less {
                        continue;
                    }
                    let pos = best
                        .binary_search_by(|probe| rank(*probe, cand))
                        .unwrap_or_else(|p| p);
                    best.insert(pos, cand);
                    best.truncate(k);
                }
            }
            NodeKind::Split { left, right } => {
                let centre = |c: usize| {
                    let m = &self.nodes[c];
                    let mid = [
                        0.5 * (m.lo[0] + m.hi[0]),
                        0.5 * (m.lo[1] + m.hi[1]),
                        0.5 * (m.lo[2] + m.hi[2]),
                    ];
                    squared_distance(mid, q)
                };
                let (first, second) = if centre(left) <= centre(right) {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(first, q, k, best);
                self.search(second, q, k, best);
            }
        }
    }
}

/// Free-function form of [`SpatialIndex::build`].
pub fn build_index(cloud: &PointCloud) -> Result<SpatialIndex> {
    SpatialIndex::build(cloud)
}

/// Free-function form of [`SpatialIndex::knn`].
pub fn knn_measured(index: &SpatialIndex, query: [f64; 3], k: usize) -> Result<NeighborSet> {
    index.knn(query, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(cloud: &PointCloud, q: [f64; 3], k: usize) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = (0..cloud.points().len())
            .filter(|&i| cloud.is_measured(i))
            .map(|i| {
                let p = cloud.point(i);
                let (dx, dy, dz) = (p[0] - q[0], p[1] - q[1], p[2] - q[2]);
                (dx * dx + dy * dy + dz * dz, i)
            })
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|(_, i)| i).collect()
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize, p_measured: f64, grid: bool) -> PointCloud {
        let points = (0..n)
            .map(|_| {
                if grid {
                    // Coarse lattice coordinates create many exact ties.
                    [
                        rng.random_range(0..4) as f64,
                        rng.random_range(0..4) as f64,
                        rng.random_range(0..3) as f64,
                    ]
                } else {
                    [
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-5.0..5.0),
                        rng.random_range(0.5..20.0),
                    ]
                }
            })
            .collect();
        let mut measured: Vec<bool> = (0..n).map(|_| rng.random_bool(p_measured)).collect();
        measured[rng.random_range(0..n)] = true;
        PointCloud::from_points(1, n, points, measured)
    }

    #[test]
    fn single_point_always_returned() {
        let cloud = PointCloud::from_points(1, 3, vec![[0.0; 3], [1.0, 2.0, 3.0], [9.0; 3]], vec![false, true, false]);
        let idx = build_index(&cloud).unwrap();
        for q in [[0.0; 3], [100.0, -3.0, 2.0]] {
            let nn = knn_measured(&idx, q, 3).unwrap();
            assert_eq!(nn.indices, vec![1]);
        }
    }

    #[test]
    fn empty_index() {
        let cloud = PointCloud::from_points(1, 2, vec![[0.0; 3]; 2], vec![false; 2]);
        assert!(matches!(build_index(&cloud), Err(Error::EmptyIndex)));
    }

    #[test]
    fn query_at_measured_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cloud = random_cloud(&mut rng, 200, 1.0, false);
        let idx = build_index(&cloud).unwrap();
        let nn = idx.knn(cloud.point(17), 1).unwrap();
        assert_eq!(nn.indices, vec![17]);
        assert_eq!(nn.distances, vec![0.0]);
    }

    #[test]
    fn exhaustion_returns_all_measured() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cloud = random_cloud(&mut rng, 30, 0.2, false);
        let m = cloud.measured_count();
        let nn = build_index(&cloud).unwrap().knn([0.0, 0.0, 1.0], m + 5).unwrap();
        assert_eq!(nn.len(), m);
    }

    #[test]
    fn midpoint_tie_prefers_lower_index() {
        let cloud = PointCloud::from_points(
            1,
            2,
            vec![[1.0, 0.0, 5.0], [-1.0, 0.0, 5.0]],
            vec![true, true],
        );
        let nn = build_index(&cloud).unwrap().knn([0.0, 0.0, 5.0], 1).unwrap();
        assert_eq!(nn.indices, vec![0]);
    }

    #[test]
    fn zero_k_rejected() {
        let cloud = PointCloud::from_points(1, 1, vec![[0.0; 3]], vec![true]);
        assert!(build_index(&cloud).unwrap().knn([0.0; 3], 0).is_err());
    }

    #[test]
    fn matches_brute_force_200_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cloud = random_cloud(&mut rng, 200, 1.0, false);
        let idx = build_index(&cloud).unwrap();
        for _ in 0..100 {
            let q = [rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0), rng.random_range(0.0..21.0)];
            assert_eq!(idx.knn(q, 4).unwrap().indices, brute_force(&cloud, q, 4));
        }
    }

    #[test]
    fn matches_brute_force_random_trials() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for trial in 0..1000 {
            let grid = trial % 3 == 0;
            let n = rng.random_range(1..150);
            let cloud = random_cloud(&mut rng, n, 0.4, grid);
            let idx = build_index(&cloud).unwrap();
            let k = rng.random_range(1..13);
            let q = if grid {
                [rng.random_range(0..4) as f64 - 0.5, rng.random_range(0..4) as f64, 1.0]
            } else {
                [rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0), rng.random_range(0.0..21.0)]
            };
            let nn = idx.knn(q, k).unwrap();
            assert_eq!(nn.indices, brute_force(&cloud, q, k), "trial {trial}");
            assert!(nn.distances.windows(2).all(|w| w[0] <= w[1]));
            assert!(nn.indices.iter().all(|&i| cloud.is_measured(i)));
        }
    }
}
