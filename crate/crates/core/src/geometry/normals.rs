use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};

use super::preprocess::pca_frame;
use super::spatial::KdTree;
use super::{OrientedPointCloud, PointCloud};
use crate::error::{Error, Result};

/// How the sign of propagated normals is fixed for each connected patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalOrientation {
    /// Mean normal points along the third PCA axis (towards a viewpoint above the leaf).
    #[default]
    PcaAxis,
    /// Normals point away from the cloud centroid, for closed shapes.
    Outward,
}

/// Unit normals from k-NN covariance, oriented toward the PCA third axis.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<OrientedPointCloud> {
    estimate_normals_with(cloud, k, NormalOrientation::PcaAxis)
}

struct Edge {
    cost: f64,
    from: usize,
    to: usize,
}

impl PartialEq for Edge {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Edge {}
impl PartialOrd for Edge {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Edge {
    // Reversed so BinaryHeap pops the cheapest edge; ties by target index.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then(other.to.cmp(&self.to))
            .then(other.from.cmp(&self.from))
    }
}

/// Normal estimation with an explicit orientation rule.
///
/// Each normal is the least-variance eigenvector of its k-NN covariance. Signs
/// are made consistent by walking a minimum spanning tree of the k-NN graph
/// with edge cost `1 - |n_i . n_j|`, then each connected patch is flipped as a
/// whole according to `orientation`.
pub fn estimate_normals_with(
    cloud: &PointCloud,
    k: usize,
    orientation: NormalOrientation,
) -> Result<OrientedPointCloud> {
    if k < 3 {
        return Err(Error::Parameter(format!("normal estimation needs k >= 3, got {k}")));
    }
    let pts = cloud.points();
    let n = pts.len();
    if n < k {
        return Err(Error::Parameter(format!("normal estimation with k = {k} needs at least {k} points, got {n}")));
    }
    let global = pca_frame(pts)
        .map(|f| f.normal_axis())
        .unwrap_or_else(|_| Vector3::z());
    let tree = KdTree::new(pts.iter().map(|p| [p.x, p.y, p.z]).collect());
    let mut neighbors: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut normals: Vec<Vector3<f64>> = Vec::with_capacity(n);
    for p in pts {
        let nn = tree.nearest_k(&[p.x, p.y, p.z], k);
        let idx: Vec<usize> = nn.iter().map(|x| x.index).collect();
        normals.push(local_normal(pts, &idx).unwrap_or(global));
        neighbors.push(idx);
    }

    let centroid = cloud.centroid();
    let mut visited = vec![false; n];
    let mut heap = BinaryHeap::new();
    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        let mut component = vec![seed];
        visited[seed] = true;
        push_edges(seed, &neighbors, &normals, &visited, &mut heap);
        while let Some(Edge { from, to, .. }) = heap.pop() {
            if visited[to] {
                continue;
            }
            if normals[to].dot(&normals[from]) < 0.0 {
                normals[to] = -normals[to];
            }
            visited[to] = true;
            component.push(to);
            push_edges(to, &neighbors, &normals, &visited, &mut heap);
        }
        let score: f64 = match orientation {
            NormalOrientation::PcaAxis => component.iter().map(|&i| normals[i].dot(&global)).sum(),
            NormalOrientation::Outward => component
                .iter()
                .map(|&i| normals[i].dot(&(pts[i] - centroid)))
                .sum(),
        };
        if score < 0.0 {
            for &i in &component {
                normals[i] = -normals[i];
            }
        }
    }
    let mut out = OrientedPointCloud::new(pts.to_vec(), normals)?;
    out.id = cloud.id.clone();
    Ok(out)
}

fn push_edges(
    from: usize,
    neighbors: &[Vec<usize>],
    normals: &[Vector3<f64>],
    visited: &[bool],
    heap: &mut BinaryHeap<Edge>,
) {
    for &to in &neighbors[from] {
        if !visited[to] {
            let cost = 1.0 - normals[from].dot(&normals[to]).abs();
            heap.push(Edge { cost, from, to });
        }
    }
}

/// Smallest-eigenvalue eigenvector of the neighborhood covariance, or `None`
/// when the neighborhood does not span a plane.
fn local_normal(pts: &[Point3<f64>], idx: &[usize]) -> Option<Vector3<f64>> {
    let c = idx.iter().fold(Vector3::zeros(), |a, &i| a + pts[i].coords) / idx.len() as f64;
    let mut cov = Matrix3::zeros();
    for &i in idx {
        let d = pts[i].coords - c;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (mid, top) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    if !(top > 0.0) || mid <= 1e-12 * top {
        return None;
    }
    let v = eig.eigenvectors.column(order[0]).into_owned();
    let len = v.norm();
    (len.is_finite() && len > 0.0).then(|| v / len)
}
