//! Sweep-hull Delaunay triangulation in the plane.
//!
//! Points are inserted in order of distance from the seed circumcenter; each
//! new point is joined to the visible part of the convex hull and the new
//! edges are legalized by recursive flipping. Orientation and in-circle
//! decisions use exact signs, so grids and other degenerate inputs are safe.

use std::cmp::Ordering;

use log::warn;

use super::predicates::{incircle_sign, orient_sign};

use crate::error::{Error, Result};

const EMPTY: usize = usize::MAX;

/// Counter-clockwise triangles over a set of planar sites.
#[derive(Debug, Clone)]
pub struct Triangulation2D {
    pub sites: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// `halfedges[3 * t + k]` is the opposite half-edge of edge `k` of triangle
    /// `t` (from vertex `k` to vertex `k + 1`), or `usize::MAX` on the hull.
    halfedges: Vec<usize>,
    /// Sites skipped because they coincide with an earlier site.
    pub duplicates: Vec<usize>,
}

/// Twice the signed area of `(a, b, c)`; positive when counter-clockwise.
pub fn orient(a: &[f64; 2], b: &[f64; 2], c: &[f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn circumradius_sq(a: &[f64; 2], b: &[f64; 2], c: &[f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let (ex, ey) = (c[0] - a[0], c[1] - a[1]);
    let bl = dx * dx + dy * dy;
    let cl = ex * ex + ey * ey;
    let d = 0.5 / (dx * ey - dy * ex);
    let x = (ey * bl - dy * cl) * d;
    let y = (dx * cl - ex * bl) * d;
    let r = x * x + y * y;
    if r.is_finite() {
        r
    } else {
        f64::INFINITY
    }
}

pub fn circumcenter(a: &[f64; 2], b: &[f64; 2], c: &[f64; 2]) -> [f64; 2] {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let (ex, ey) = (c[0] - a[0], c[1] - a[1]);
    let bl = dx * dx + dy * dy;
    let cl = ex * ex + ey * ey;
    let d = 0.5 / (dx * ey - dy * ex);
    [a[0] + (ey * bl - dy * cl) * d, a[1] + (dx * cl - ex * bl) * d]
}

fn strictly_between(a: &[f64; 2], b: &[f64; 2], p: &[f64; 2]) -> bool {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let dot_a = (p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1];
    let dot_b = (b[0] - p[0]) * ab[0] + (b[1] - p[1]) * ab[1];
    dot_a > 0.0 && dot_b > 0.0
}

fn pseudo_angle(dx: f64, dy: f64) -> f64 {
    let p = dx / (dx.abs() + dy.abs());
    let a = if dy > 0.0 { 3.0 - p } else { 1.0 + p };
    a / 4.0
}

struct Builder<'a> {
    coords: &'a [[f64; 2]],
    triangles: Vec<usize>,
    halfedges: Vec<usize>,
    hull_prev: Vec<usize>,
    hull_next: Vec<usize>,
    hull_tri: Vec<usize>,
    hull_hash: Vec<usize>,
    hull_start: usize,
    center: [f64; 2],
    edge_stack: Vec<usize>,
}

impl Builder<'_> {
    fn hash_key(&self, p: &[f64; 2]) -> usize {
        let n = self.hull_hash.len();
        let a = pseudo_angle(p[0] - self.center[0], p[1] - self.center[1]);
        ((a * n as f64).floor() as usize) % n
    }

    fn link(&mut self, a: usize, b: usize) {
        self.halfedges[a] = b;
        if b != EMPTY {
            self.halfedges[b] = a;
        }
    }

    fn add_triangle(&mut self, i0: usize, i1: usize, i2: usize, a: usize, b: usize, c: usize) -> usize {
        let t = self.triangles.len();
        self.triangles.extend_from_slice(&[i0, i1, i2]);
        self.halfedges.extend_from_slice(&[EMPTY; 3]);
        self.link(t, a);
        self.link(t + 1, b);
        self.link(t + 2, c);
        t
    }

    /// Flips edges until every edge reachable from `a` is locally Delaunay.
    /// Returns the half-edge that now occupies the position of `a`'s predecessor.
    fn legalize(&mut self, mut a: usize) -> usize {
        let mut ar;
        loop {
            let b = self.halfedges[a];
            let a0 = a - a % 3;
            ar = a0 + (a + 2) % 3;
            if b == EMPTY {
                match self.edge_stack.pop() {
                    Some(next) => {
                        a = next;
                        continue;
                    }
                    None => break,
                }
            }
            let b0 = b - b % 3;
            let al = a0 + (a + 1) % 3;
            let bl = b0 + (b + 2) % 3;
            let p0 = self.triangles[ar];
            let pr = self.triangles[a];
            let pl = self.triangles[al];
            let p1 = self.triangles[bl];
            let c = self.coords;
            if incircle_sign(&c[p0], &c[pr], &c[pl], &c[p1]) == Ordering::Greater {
                self.triangles[a] = p1;
                self.triangles[b] = p0;
                let hbl = self.halfedges[bl];
                if hbl == EMPTY {
                    let mut e = self.hull_start;
                    loop {
                        if self.hull_tri[e] == bl {
                            self.hull_tri[e] = a;
                            break;
                        }
                        e = self.hull_prev[e];
                        if e == self.hull_start {
                            break;
                        }
                    }
                }
                self.link(a, hbl);
                let har = self.halfedges[ar];
                self.link(b, har);
                self.link(ar, bl);
                let br = b0 + (b + 1) % 3;
                self.edge_stack.push(br);
            } else {
                match self.edge_stack.pop() {
                    Some(next) => a = next,
                    None => break,
                }
            }
        }
        ar
    }
}

/// Delaunay triangulation of `sites`. Coincident sites are triangulated once;
/// the skipped indices are listed in [`Triangulation2D::duplicates`].
pub fn delaunay_2d(sites: &[[f64; 2]]) -> Result<Triangulation2D> {
    let n = sites.len();
    if n < 3 {
        return Err(Error::Degenerate(format!("Delaunay needs at least 3 sites, got {n}")));
    }
    if sites.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::Parameter("non-finite site coordinate".into()));
    }
    let (mut min, mut max) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in sites {
        for k in 0..2 {
            min[k] = min[k].min(p[k]);
            max[k] = max[k].max(p[k]);
        }
    }
    let mid = [(min[0] + max[0]) / 2.0, (min[1] + max[1]) / 2.0];
    let d2 = |a: &[f64; 2], b: &[f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);

    let i0 = (0..n)
        .min_by(|&a, &b| d2(&sites[a], &mid).total_cmp(&d2(&sites[b], &mid)))
        .unwrap();
    let i1 = (0..n)
        .filter(|&i| d2(&sites[i], &sites[i0]) > 0.0)
        .min_by(|&a, &b| d2(&sites[a], &sites[i0]).total_cmp(&d2(&sites[b], &sites[i0])))
        .ok_or_else(|| Error::Degenerate("all sites coincide".into()))?;
    let mut best = (EMPTY, f64::INFINITY);
    for i in 0..n {
        if i == i0 || i == i1 {
            continue;
        }
        let r = circumradius_sq(&sites[i0], &sites[i1], &sites[i]);
        if r < best.1 {
            best = (i, r);
        }
    }
    let mut i2 = best.0;
    let mut i1 = i1;
    let seed = if i2 == EMPTY { Ordering::Equal } else { orient_sign(&sites[i0], &sites[i1], &sites[i2]) };
    if seed == Ordering::Equal {
        return Err(Error::Degenerate("all sites are collinear".into()));
    }
    if seed == Ordering::Less {
        std::mem::swap(&mut i1, &mut i2);
    }
    let center = circumcenter(&sites[i0], &sites[i1], &sites[i2]);

    let dists: Vec<f64> = sites.iter().map(|p| d2(p, &center)).collect();
    let mut ids: Vec<usize> = (0..n).collect();
    ids.sort_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(a.cmp(&b)));

    let hash_size = (n as f64).sqrt().ceil() as usize;
    let max_triangles = 2 * n - 5;
    let mut b = Builder {
        coords: sites,
        triangles: Vec::with_capacity(max_triangles * 3),
        halfedges: Vec::with_capacity(max_triangles * 3),
        hull_prev: vec![0; n],
        hull_next: vec![0; n],
        hull_tri: vec![0; n],
        hull_hash: vec![EMPTY; hash_size],
        hull_start: i0,
        center,
        edge_stack: Vec::new(),
    };
    b.hull_next[i0] = i1;
    b.hull_prev[i2] = i1;
    b.hull_next[i1] = i2;
    b.hull_prev[i0] = i2;
    b.hull_next[i2] = i0;
    b.hull_prev[i1] = i0;
    b.hull_tri[i0] = 0;
    b.hull_tri[i1] = 1;
    b.hull_tri[i2] = 2;
    for &i in &[i0, i1, i2] {
        let key = b.hash_key(&sites[i]);
        b.hull_hash[key] = i;
    }
    b.add_triangle(i0, i1, i2, EMPTY, EMPTY, EMPTY);

    let mut duplicates = Vec::new();
    let mut prev: Option<usize> = None;
    for &i in &ids {
        let p = &sites[i];
        if let Some(j) = prev {
            if sites[j] == *p {
                duplicates.push(i);
                continue;
            }
        }
        prev = Some(i);
        if i == i0 || i == i1 || i == i2 {
            continue;
        }
        if sites[i0] == *p || sites[i1] == *p || sites[i2] == *p {
            duplicates.push(i);
            continue;
        }

        let key = b.hash_key(p);
        let mut start = 0;
        for j in 0..hash_size {
            start = b.hull_hash[(key + j) % hash_size];
            if start != EMPTY && start != b.hull_next[start] {
                break;
            }
        }
        start = b.hull_prev[start];
        let mut e = start;
        loop {
            let q = b.hull_next[e];
            let o = orient_sign(&sites[e], &sites[q], p);
            // A site exactly on a hull edge splits it; the zero-area triangle
            // this creates is flipped away by legalization.
            if o == Ordering::Less || (o == Ordering::Equal && strictly_between(&sites[e], &sites[q], p)) {
                break;
            }
            e = q;
            if e == start {
                e = EMPTY;
                break;
            }
        }
        if e == EMPTY {
            // Inside the hull within round-off: a near-duplicate.
            duplicates.push(i);
            continue;
        }

        let next_e = b.hull_next[e];
        let hte = b.hull_tri[e];
        let t = b.add_triangle(e, i, next_e, EMPTY, EMPTY, hte);
        b.hull_tri[i] = b.legalize(t + 2);
        b.hull_tri[e] = t;

        let mut nn = b.hull_next[e];
        loop {
            let q = b.hull_next[nn];
            if orient_sign(&sites[nn], &sites[q], p) != Ordering::Less {
                break;
            }
            let (hi, hn) = (b.hull_tri[i], b.hull_tri[nn]);
            let t = b.add_triangle(nn, i, q, hi, EMPTY, hn);
            b.hull_tri[i] = b.legalize(t + 2);
            b.hull_next[nn] = nn;
            nn = q;
        }
        if e == start {
            loop {
                let q = b.hull_prev[e];
                if orient_sign(&sites[q], &sites[e], p) != Ordering::Less {
                    break;
                }
                let (he, hq) = (b.hull_tri[e], b.hull_tri[q]);
                let t = b.add_triangle(q, i, e, EMPTY, he, hq);
                b.legalize(t + 2);
                b.hull_tri[q] = t;
                b.hull_next[e] = e;
                e = q;
            }
        }
        b.hull_start = e;
        b.hull_prev[i] = e;
        b.hull_next[e] = i;
        b.hull_prev[nn] = i;
        b.hull_next[i] = nn;
        let ki = b.hash_key(p);
        b.hull_hash[ki] = i;
        let ke = b.hash_key(&sites[e]);
        b.hull_hash[ke] = e;
    }
    if !duplicates.is_empty() {
        warn!("Delaunay: skipped {} duplicate sites", duplicates.len());
    }
    let triangles = b
        .triangles
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    Ok(Triangulation2D {
        sites: sites.to_vec(),
        triangles,
        halfedges: b.halfedges,
        duplicates,
    })
}

impl Triangulation2D {
    /// Triangle across edge `k` (vertex `k` to `k + 1`) of triangle `t`.
    pub fn neighbor(&self, t: usize, k: usize) -> Option<usize> {
        let h = self.halfedges[3 * t + k];
        (h != EMPTY).then_some(h / 3)
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        0.5 * orient(&self.sites[a], &self.sites[b], &self.sites[c])
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn circumradius(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        circumradius_sq(&self.sites[a], &self.sites[b], &self.sites[c]).sqrt()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive empty-circumcircle check. Returns the number of violations.
    pub(crate) fn brute_force_violations(tri: &Triangulation2D) -> usize {
        let mut bad = 0;
        for t in &tri.triangles {
            let (a, b, c) = (&tri.sites[t[0]], &tri.sites[t[1]], &tri.sites[t[2]]);
            assert!(orient(a, b, c) >= 0.0, "triangle not counter-clockwise");
            for (i, d) in tri.sites.iter().enumerate() {
                if t.contains(&i) {
                    continue;
                }
                if incircle_sign(a, b, c, d) == Ordering::Greater {
                    bad += 1;
                }
            }
        }
        bad
    }

    fn hull_area(sites: &[[f64; 2]]) -> f64 {
        let mut pts = sites.to_vec();
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        let mut hull: Vec<[f64; 2]> = Vec::new();
        for pass in 0..2 {
            let start = hull.len();
            let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
                Box::new(pts.iter())
            } else {
                Box::new(pts.iter().rev())
            };
            for p in iter {
                while hull.len() >= start + 2
                    && orient(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0
                {
                    hull.pop();
                }
                hull.push(*p);
            }
            hull.pop();
        }
        let n = hull.len();
        (0..n)
            .map(|i| {
                let (a, b) = (hull[i], hull[(i + 1) % n]);
                a[0] * b[1] - a[1] * b[0]
            })
            .sum::<f64>()
            / 2.0
    }

    #[test]
    fn unit_square_two_triangles() {
        let t = delaunay_2d(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
        assert_eq!(t.triangles.len(), 2);
        assert!((t.area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn collinear_is_degenerate() {
        let r = delaunay_2d(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]);
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }

    #[test]
    fn random_sites_satisfy_empty_circle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for n in [3usize, 10, 100, 500] {
            let sites: Vec<[f64; 2]> = (0..n).map(|_| [rng.random(), rng.random()]).collect();
            let t = delaunay_2d(&sites).unwrap();
            assert_eq!(brute_force_violations(&t), 0);
            assert!((t.area() - hull_area(&sites)).abs() < 1e-12);
        }
    }

    #[test]
    fn regular_grid_with_duplicates() {
        let mut sites: Vec<[f64; 2]> = (0..400).map(|i| [(i % 20) as f64, (i / 20) as f64]).collect();
        sites.push([3.0, 4.0]);
        sites.push([0.0, 0.0]);
        let t = delaunay_2d(&sites).unwrap();
        assert_eq!(t.duplicates.len(), 2);
        let used: std::collections::HashSet<usize> = t.triangles.iter().flatten().copied().collect();
        assert_eq!(used.len(), 400);
        assert_eq!(brute_force_violations(&t), 0);
        assert!((t.area() - 361.0).abs() < 1e-9);
    }

    #[test]
    fn cocircular_sites() {
        let sites: Vec<[f64; 2]> = (0..10)
            .map(|i| {
                let a = i as f64 * std::f64::consts::TAU / 10.0;
                [a.cos(), a.sin()]
            })
            .collect();
        let t = delaunay_2d(&sites).unwrap();
        assert_eq!(t.triangles.len(), 8);
        assert!((t.area() - hull_area(&sites)).abs() < 1e-12);
    }
}
