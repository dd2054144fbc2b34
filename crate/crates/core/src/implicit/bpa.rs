//! Ball-pivoting triangulation.
//!
//! A ball of radius `r` rests on a seed triangle and pivots around the edges
//! of the advancing front. Each pivot picks the point the ball meets first
//! while rotating about the edge; the triangle is kept only if the ball
//! touching its three vertices contains no other point.

use std::collections::{HashMap, HashSet, VecDeque};

use log::debug;
use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::spatial::KdTree;
use crate::geometry::{mean_nearest_neighbor_distance, OrientedPointCloud, TriangleMesh};

/// Relative tolerance on the empty-ball test.
pub const EMPTY_BALL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BpaConfig {
    /// Ball radius as a multiple of the mean nearest-neighbour distance.
    pub radius_mult: f64,
}

impl Default for BpaConfig {
    fn default() -> Self {
        Self { radius_mult: 2.0 }
    }
}

#[derive(Debug, Clone)]
pub struct BpaReconstruction {
    /// Mesh over the input points that were reached; vertex `v` is input
    /// point `vertex_source[v]`.
    pub mesh: TriangleMesh,
    pub vertex_source: Vec<usize>,
    pub radius: f64,
    pub seeds: usize,
}

/// `multiplier` times the mean distance from each point to its nearest other
/// point.
pub fn adaptive_ball_radius(points: &[Point3<f64>], multiplier: f64) -> Result<f64> {
    if !(multiplier > 0.0 && multiplier.is_finite()) {
        return Err(Error::Parameter(format!("radius multiplier must be positive, got {multiplier}")));
    }
    Ok(multiplier * mean_nearest_neighbor_distance(points)?)
}

/// Center of the radius-`r` ball through `a`, `b`, `c` on the side of
/// `(b - a) x (c - a)`; `None` when the circumradius exceeds `r` or the
/// triangle is degenerate.
pub fn ball_center(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>, r: f64) -> Option<Point3<f64>> {
    let ab = b - a;
    let ac = c - a;
    let n = ab.cross(&ac);
    let n2 = n.norm_squared();
    let scale = ab.norm_squared().max(ac.norm_squared());
    if !(n2 > 1e-24 * scale * scale) {
        return None;
    }
    let offset = (n.cross(&ab) * ac.norm_squared() + ac.cross(&n) * ab.norm_squared()) / (2.0 * n2);
    let rho2 = offset.norm_squared();
    let h2 = r * r - rho2;
    if h2 < 0.0 {
        return None;
    }
    Some(a + offset + n * (h2.sqrt() / n2.sqrt()))
}

/// True when no point other than `skip` lies strictly inside the ball.
pub fn ball_is_empty(tree: &KdTree<3>, center: &Point3<f64>, r: f64, skip: &[usize]) -> bool {
    tree.within_radius(&[center.x, center.y, center.z], r * (1.0 - EMPTY_BALL_TOL))
        .iter()
        .all(|n| skip.contains(&n.index))
}

#[derive(Debug, Clone, Copy)]
struct FrontEdge {
    opposite: usize,
    center: Point3<f64>,
}

struct Pivoter<'a> {
    points: &'a [Point3<f64>],
    normals: &'a [Vector3<f64>],
    tree: KdTree<3>,
    r: f64,
    used: Vec<bool>,
    /// Front edges incident to each vertex.
    on_front: Vec<u32>,
    front: HashMap<(usize, usize), FrontEdge>,
    queue: VecDeque<(usize, usize)>,
    directed: HashSet<(usize, usize)>,
    undirected: HashMap<(usize, usize), u8>,
    triangles: Vec<[usize; 3]>,
}

impl<'a> Pivoter<'a> {
    fn new(cloud: &'a OrientedPointCloud, r: f64) -> Self {
        let points = cloud.points();
        Self {
            points,
            normals: cloud.normals(),
            tree: KdTree::new(points.iter().map(|p| [p.x, p.y, p.z]).collect()),
            r,
            used: vec![false; points.len()],
            on_front: vec![0; points.len()],
            front: HashMap::new(),
            queue: VecDeque::new(),
            directed: HashSet::new(),
            undirected: HashMap::new(),
            triangles: Vec::new(),
        }
    }

    fn neighbors(&self, p: &Point3<f64>, radius: f64) -> Vec<usize> {
        self.tree.within_radius(&[p.x, p.y, p.z], radius).into_iter().map(|n| n.index).collect()
    }

    fn agrees_with_normals(&self, tri: [usize; 3]) -> bool {
        let [a, b, c] = tri.map(|i| self.points[i]);
        let n = (b - a).cross(&(c - a));
        n.dot(&(self.normals[tri[0]] + self.normals[tri[1]] + self.normals[tri[2]])) > 0.0
    }

    fn edge_free(&self, a: usize, b: usize) -> bool {
        !self.directed.contains(&(a, b)) && self.undirected.get(&(a.min(b), a.max(b))).copied().unwrap_or(0) < 2
    }

    fn add_triangle(&mut self, tri: [usize; 3], center: Point3<f64>) {
        self.triangles.push(tri);
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            self.used[a] = true;
            self.directed.insert((a, b));
            *self.undirected.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            if self.front.contains_key(&(b, a)) {
                // Glued onto an existing front edge; both sides now covered.
                self.remove_front(b, a);
            } else if self.undirected[&(a.min(b), a.max(b))] == 1 {
                self.front.insert((a, b), FrontEdge { opposite: tri[(k + 2) % 3], center });
                self.on_front[a] += 1;
                self.on_front[b] += 1;
                self.queue.push_back((a, b));
            }
        }
    }

    fn remove_front(&mut self, a: usize, b: usize) {
        if self.front.remove(&(a, b)).is_some() {
            self.on_front[a] -= 1;
            self.on_front[b] -= 1;
        }
    }

    fn try_seed(&mut self, p: usize) -> bool {
        let pp = self.points[p];
        let cands: Vec<usize> = self
            .neighbors(&pp, 2.0 * self.r)
            .into_iter()
            .filter(|&q| q != p && !self.used[q])
            .collect();
        for (x, &q) in cands.iter().enumerate() {
            for &s in &cands[x + 1..] {
                let tri = if self.agrees_with_normals([p, q, s]) { [p, q, s] } else { [p, s, q] };
                if !self.agrees_with_normals(tri) {
                    continue;
                }
                let [a, b, c] = tri.map(|i| self.points[i]);
                let Some(center) = ball_center(&a, &b, &c, self.r) else { continue };
                if ball_is_empty(&self.tree, &center, self.r, &tri) {
                    self.add_triangle(tri, center);
                    return true;
                }
            }
        }
        false
    }

    /// Point first met by the ball rotating about front edge `(i, j)`.
    fn pivot(&self, i: usize, j: usize, edge: FrontEdge) -> Option<(usize, Point3<f64>)> {
        let (pi, pj) = (self.points[i], self.points[j]);
        let m = Point3::from((pi.coords + pj.coords) / 2.0);
        let axis = (pj - pi).normalize();
        let old = edge.center - m;
        let u = old - axis * axis.dot(&old);
        if !(u.norm() > 0.0) {
            return None;
        }
        let u = u.normalize();
        let w = axis.cross(&u);
        let mut hits: Vec<(f64, f64, usize, Point3<f64>)> = Vec::new();
        for k in self.neighbors(&m, 2.0 * self.r) {
            if k == i || k == j || k == edge.opposite {
                continue;
            }
            let tri = [j, i, k];
            if !self.agrees_with_normals(tri) {
                continue;
            }
            let Some(c) = ball_center(&pj, &pi, &self.points[k], self.r) else { continue };
            let d = c - m;
            let mut theta = d.dot(&w).atan2(d.dot(&u));
            if theta < 0.0 {
                theta += std::f64::consts::TAU;
            }
            if theta > std::f64::consts::TAU - 1e-9 {
                theta = 0.0;
            }
            hits.push((theta, (self.points[k] - m).norm_squared(), k, c));
        }
        hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
        hits.into_iter()
            .find(|&(_, _, k, c)| ball_is_empty(&self.tree, &c, self.r, &[i, j, k]))
            .map(|(_, _, k, c)| (k, c))
    }

    fn expand(&mut self) {
        while let Some((i, j)) = self.queue.pop_front() {
            let Some(&edge) = self.front.get(&(i, j)) else { continue };
            let found = self.pivot(i, j, edge).filter(|&(k, _)| {
                (!self.used[k] || self.on_front[k] > 0) && self.edge_free(i, k) && self.edge_free(k, j)
            });
            // Either way the edge leaves the front: covered or boundary.
            self.remove_front(i, j);
            if let Some((k, c)) = found {
                self.add_triangle([j, i, k], c);
            }
        }
    }
}

/// Seeds from the lowest-index unused point and pivots until the front is
/// exhausted, repeating until no seed triangle can be found.
pub fn reconstruct_bpa(cloud: &OrientedPointCloud, cfg: &BpaConfig) -> Result<BpaReconstruction> {
    let r = adaptive_ball_radius(cloud.points(), cfg.radius_mult)?;
    bpa_with_radius(cloud, r)
}

/// Ball pivoting with an explicit radius.
pub fn bpa_with_radius(cloud: &OrientedPointCloud, r: f64) -> Result<BpaReconstruction> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Parameter(format!("ball radius must be positive, got {r}")));
    }
    let mut piv = Pivoter::new(cloud, r);
    let mut seeds = 0;
    for p in 0..cloud.len() {
        if piv.used[p] {
            continue;
        }
        if piv.try_seed(p) {
            seeds += 1;
            piv.expand();
        }
    }
    debug!("BPA: {} triangles from {} seeds, r = {r:.4e}", piv.triangles.len(), seeds);
    let mut remap = vec![usize::MAX; cloud.len()];
    let mut vertex_source = Vec::new();
    let triangles: Vec<[usize; 3]> = piv
        .triangles
        .iter()
        .map(|t| {
            t.map(|i| {
                if remap[i] == usize::MAX {
                    remap[i] = vertex_source.len();
                    vertex_source.push(i);
                }
                remap[i]
            })
        })
        .collect();
    let vertices = vertex_source.iter().map(|&i| cloud.points()[i]).collect();
    Ok(BpaReconstruction { mesh: TriangleMesh::new(vertices, triangles)?, vertex_source, radius: r, seeds })
}

/// Indices of triangles whose radius-`r` ball contains another input point.
pub fn empty_ball_violations(cloud: &OrientedPointCloud, rec: &BpaReconstruction) -> Vec<usize> {
    let pts = cloud.points();
    let m = &rec.mesh;
    (0..m.triangles().len())
        .filter(|&t| {
            let tri = m.triangles()[t].map(|v| rec.vertex_source[v]);
            let Some(c) = ball_center(&pts[tri[0]], &pts[tri[1]], &pts[tri[2]], rec.radius) else {
                return true;
            };
            let limit = rec.radius * (1.0 - EMPTY_BALL_TOL);
            pts.iter()
                .enumerate()
                .any(|(i, p)| !tri.contains(&i) && (p - c).norm() < limit)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn flat(points: Vec<Point3<f64>>) -> OrientedPointCloud {
        let n = points.len();
        OrientedPointCloud::new(points, vec![Vector3::z(); n]).unwrap()
    }

    fn jittered_plane(n: usize, side: f64, seed: u64) -> Vec<Point3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let step = side / (n - 1) as f64;
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let mut jit = |k: usize| if k == 0 || k + 1 == n { 0.0 } else { (rng.random::<f64>() - 0.5) * 0.3 * step };
                let (a, b) = (jit(i), jit(j));
                pts.push(Point3::new(i as f64 * step + a, j as f64 * step + b, 0.0));
            }
        }
        pts
    }

    fn fibonacci_sphere(n: usize) -> OrientedPointCloud {
        let golden = PI * (3.0 - 5f64.sqrt());
        let (pts, nrm): (Vec<_>, Vec<_>) = (0..n)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let rho = (1.0 - z * z).sqrt();
                let t = golden * i as f64;
                let d = Vector3::new(rho * t.cos(), rho * t.sin(), z);
                (Point3::from(d), d)
            })
            .unzip();
        OrientedPointCloud::normalizing(pts, nrm).unwrap()
    }

    #[test]
    fn radius_examples() {
        let two = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0)];
        assert!((adaptive_ball_radius(&two, 1.5).unwrap() - 3.0).abs() < 1e-12);
        let grid: Vec<_> = (0..10).flat_map(|i| (0..10).map(move |j| Point3::new(i as f64 * 0.3, j as f64 * 0.3, 0.0))).collect();
        assert!((adaptive_ball_radius(&grid, 2.0).unwrap() - 0.6).abs() < 1e-9);
        assert!(adaptive_ball_radius(&two[..1], 1.0).is_err());
        assert!(adaptive_ball_radius(&two, 0.0).is_err());
    }

    #[test]
    fn radius_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<_> = (0..1000).map(|_| Point3::new(rng.random(), rng.random(), rng.random::<f64>() * 0.1)).collect();
        let brute: f64 = pts
            .iter()
            .enumerate()
            .map(|(i, p)| {
                pts.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, q)| (p - q).norm()).fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / 1000.0;
        assert!((adaptive_ball_radius(&pts, 1.0).unwrap() - brute).abs() < 1e-9);
    }

    #[test]
    fn ball_center_is_equidistant() {
        let (a, b, c) = (Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.2, 0.1), Point3::new(0.3, 0.9, -0.2));
        let ctr = ball_center(&a, &b, &c, 2.0).unwrap();
        for p in [a, b, c] {
            assert!(((p - ctr).norm() - 2.0).abs() < 1e-12);
        }
        assert!((ctr - a).dot(&(b - a).cross(&(c - a))) > 0.0);
        assert!(ball_center(&a, &b, &c, 0.1).is_none());
    }

    #[test]
    fn single_triangle_and_square() {
        let tri = flat(vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.5, 0.75f64.sqrt(), 0.0)]);
        let rec = bpa_with_radius(&tri, 1.0).unwrap();
        assert_eq!(rec.mesh.triangles().len(), 1);
        assert!(rec.mesh.triangle_cross(0).z > 0.0);

        let line = flat(vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0)]);
        assert!(bpa_with_radius(&line, 5.0).unwrap().mesh.is_empty());

        let sq = flat(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ]);
        let rec = bpa_with_radius(&sq, 1.0).unwrap();
        assert_eq!(rec.mesh.triangles().len(), 2);
        assert!((rec.mesh.area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plane_area_and_interpolation() {
        let pts = jittered_plane(40, 1.0, 4);
        let cloud = flat(pts.clone());
        let rec = reconstruct_bpa(&cloud, &BpaConfig::default()).unwrap();
        assert!((rec.mesh.area() - 1.0).abs() <= 0.03, "{}", rec.mesh.area());
        for (v, &src) in rec.mesh.vertices().iter().zip(&rec.vertex_source) {
            assert_eq!(*v, pts[src]);
        }
        assert!((0..rec.mesh.triangles().len()).all(|t| rec.mesh.triangle_cross(t).z > 0.0));
        assert!(empty_ball_violations(&cloud, &rec).is_empty());
    }

    #[test]
    fn decimated_half_leaves_holes() {
        let dense = jittered_plane(60, 1.0, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<_> = dense.into_iter().filter(|p| p.x < 0.5 || rng.random::<f64>() < 0.1).collect();
        let rec = reconstruct_bpa(&flat(pts), &BpaConfig::default()).unwrap();
        let counts = rec.mesh.edge_counts();
        let sparse_boundary = counts
            .iter()
            .filter(|&(&(a, b), &c)| c == 1 && rec.mesh.vertices()[a].x > 0.55 && rec.mesh.vertices()[b].x > 0.55)
            .count();
        assert!(sparse_boundary > 0);
        assert!(rec.mesh.vertices().iter().any(|v| v.x > 0.55));
        assert!(rec.mesh.boundary_edge_count() > 0);
        assert!(rec.mesh.area() < 0.9);
    }

    #[test]
    fn sphere_area_and_closure() {
        let cloud = fibonacci_sphere(20000);
        let rec = reconstruct_bpa(&cloud, &BpaConfig::default()).unwrap();
        let exact = 4.0 * PI;
        assert!((rec.mesh.area() - exact).abs() <= 0.05 * exact, "{}", rec.mesh.area());
        assert!(rec.mesh.interior_edge_fraction() >= 0.95, "{}", rec.mesh.interior_edge_fraction());
        assert!((0..rec.mesh.triangles().len())
            .all(|t| rec.mesh.triangle_cross(t).dot(&rec.mesh.triangle_centroid(t).coords) > 0.0));
    }

    #[test]
    fn accepted_balls_are_empty() {
        let cloud = fibonacci_sphere(1500);
        let rec = reconstruct_bpa(&cloud, &BpaConfig::default()).unwrap();
        assert!(rec.mesh.triangles().len() <= 5000);
        assert!(empty_ball_violations(&cloud, &rec).is_empty());
    }
}
