//! Static k-d tree for nearest-neighbor and radius queries in 2 or 3 dimensions.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const LEAF_SIZE: usize = 8;

/// A neighbor returned by a query. Ordered by distance, then index, so results
/// are deterministic when distances tie.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist_sq: f64,
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist_sq
            .total_cmp(&other.dist_sq)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Balanced k-d tree stored implicitly over a permutation of point indices.
#[derive(Debug, Clone)]
pub struct KdTree<const D: usize> {
    points: Vec<[f64; D]>,
    order: Vec<usize>,
    split_axis: Vec<u8>,
}

impl<const D: usize> KdTree<D> {
    pub fn new(points: Vec<[f64; D]>) -> Self {
        let n = points.len();
        let mut tree = Self {
            points,
            order: (0..n).collect(),
            split_axis: vec![0; n],
        };
        tree.build(0, n);
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> &[f64; D] {
        &self.points[index]
    }

    fn build(&mut self, lo: usize, hi: usize) {
        if hi - lo <= LEAF_SIZE {
            return;
        }
        let axis = self.widest_axis(lo, hi);
        let mid = (lo + hi) / 2;
        let points = &self.points;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            points[a][axis]
                .total_cmp(&points[b][axis])
                .then(a.cmp(&b))
        });
        self.split_axis[mid] = axis as u8;
        self.build(lo, mid);
        self.build(mid + 1, hi);
    }

    fn widest_axis(&self, lo: usize, hi: usize) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for axis in 0..D {
            let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &self.order[lo..hi] {
                min = min.min(self.points[i][axis]);
                max = max.max(self.points[i][axis]);
            }
            if max - min > best.1 {
                best = (axis, max - min);
            }
        }
        best.0
    }

    fn dist_sq(&self, index: usize, q: &[f64; D]) -> f64 {
        let p = &self.points[index];
        (0..D).map(|k| (p[k] - q[k]) * (p[k] - q[k])).sum()
    }

    /// The `k` nearest points to `q`, closest first.
    pub fn nearest_k(&self, q: &[f64; D], k: usize) -> Vec<Neighbor> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, self.points.len(), q, k, &mut heap);
        heap.into_sorted_vec()
    }

    fn knn_rec(&self, lo: usize, hi: usize, q: &[f64; D], k: usize, heap: &mut BinaryHeap<Neighbor>) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                offer(heap, k, Neighbor { index: i, dist_sq: self.dist_sq(i, q) });
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let pivot = self.order[mid];
        let axis = self.split_axis[mid] as usize;
        let delta = q[axis] - self.points[pivot][axis];
        offer(heap, k, Neighbor { index: pivot, dist_sq: self.dist_sq(pivot, q) });
        let (near, far) = if delta < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.knn_rec(near.0, near.1, q, k, heap);
        let bound = if heap.len() < k {
            f64::INFINITY
        } else {
            heap.peek().map_or(f64::INFINITY, |n| n.dist_sq)
        };
        if delta * delta <= bound {
            self.knn_rec(far.0, far.1, q, k, heap);
        }
    }

    /// Closest point to `q`.
    pub fn nearest(&self, q: &[f64; D]) -> Option<Neighbor> {
        self.nearest_k(q, 1).into_iter().next()
    }

    /// Every point within distance `radius` of `q` (inclusive), closest first.
    pub fn within_radius(&self, q: &[f64; D], radius: f64) -> Vec<Neighbor> {
        let mut out = Vec::new();
        if !self.points.is_empty() {
            self.radius_rec(0, self.points.len(), q, radius * radius, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn radius_rec(&self, lo: usize, hi: usize, q: &[f64; D], r_sq: f64, out: &mut Vec<Neighbor>) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                let d = self.dist_sq(i, q);
                if d <= r_sq {
                    out.push(Neighbor { index: i, dist_sq: d });
                }
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let pivot = self.order[mid];
        let axis = self.split_axis[mid] as usize;
        let delta = q[axis] - self.points[pivot][axis];
        let d = self.dist_sq(pivot, q);
        if d <= r_sq {
            out.push(Neighbor { index: pivot, dist_sq: d });
        }
        if delta <= 0.0 || delta * delta <= r_sq {
            self.radius_rec(lo, mid, q, r_sq, out);
        }
        if delta >= 0.0 || delta * delta <= r_sq {
            self.radius_rec(mid + 1, hi, q, r_sq, out);
        }
    }
}

fn offer(heap: &mut BinaryHeap<Neighbor>, k: usize, n: Neighbor) {
    if heap.len() < k {
        heap.push(n);
    } else if let Some(top) = heap.peek() {
        if n < *top {
            heap.pop();
            heap.push(n);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_knn(points: &[[f64; 3]], q: &[f64; 3], k: usize) -> Vec<Neighbor> {
        let mut all: Vec<Neighbor> = points
            .iter()
            .enumerate()
            .map(|(i, p)| Neighbor {
                index: i,
                dist_sq: (0..3).map(|a| (p[a] - q[a]).powi(2)).sum(),
            })
            .collect();
        all.sort();
        all.truncate(k);
        all
    }

    proptest! {
        #[test]
        fn knn_matches_brute_force(
            pts in prop::collection::vec(prop::array::uniform3(-10.0f64..10.0), 1..200),
            q in prop::array::uniform3(-12.0f64..12.0),
            k in 1usize..20,
        ) {
            let tree = KdTree::new(pts.clone());
            prop_assert_eq!(tree.nearest_k(&q, k), brute_knn(&pts, &q, k));
        }

        #[test]
        fn radius_matches_brute_force(
            pts in prop::collection::vec(prop::array::uniform2(0.0f64..1.0), 1..300),
            q in prop::array::uniform2(0.0f64..1.0),
            r in 0.0f64..0.5,
        ) {
            let tree = KdTree::new(pts.clone());
            let got: Vec<usize> = tree.within_radius(&q, r).iter().map(|n| n.index).collect();
            let mut want: Vec<(f64, usize)> = pts.iter().enumerate()
                .map(|(i, p)| ((p[0]-q[0]).powi(2) + (p[1]-q[1]).powi(2), i))
                .filter(|(d, _)| *d <= r * r)
                .collect();
            want.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            prop_assert_eq!(got, want.into_iter().map(|(_, i)| i).collect::<Vec<_>>());
        }
    }

    #[test]
    fn duplicate_points_tie_by_index() {
        let tree = KdTree::new(vec![[1.0, 1.0]; 20]);
        let nn = tree.nearest_k(&[1.0, 1.0], 3);
        assert_eq!(nn.iter().map(|n| n.index).collect::<Vec<_>>(), vec![0, 1, 2]);
    }
}
