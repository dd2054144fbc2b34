//! Closed boundary curves in a planar parameter domain and trimmed area integration.

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};

use super::surface::ParametricSurface;
use crate::error::{Error, Result};
use crate::geometry::spatial::KdTree;
use crate::geometry::PointCloud;
use crate::local::delaunay::delaunay_2d;

/// Closed uniform B-spline curve (degree 1 or 3) in a 2D parameter domain.
#[derive(Debug, Clone, PartialEq)]
pub struct TrimCurve {
    control: Vec<[f64; 2]>,
    degree: usize,
    polygon: Vec<[f64; 2]>,
}

const SAMPLES_PER_SEGMENT: usize = 8;

impl TrimCurve {
    /// Closed curve with the given periodic control polygon.
    pub fn new(control: Vec<[f64; 2]>, degree: usize) -> Result<Self> {
        if degree != 1 && degree != 3 {
            return Err(Error::Parameter(format!("trim curves are linear or cubic, got degree {degree}")));
        }
        if control.len() < 3 {
            return Err(Error::Degenerate("trim curve needs at least 3 control points".into()));
        }
        let mut curve = Self {
            control,
            degree,
            polygon: Vec::new(),
        };
        curve.polygon = curve.sample();
        if polygon_area(&curve.polygon).abs() <= 0.0 {
            return Err(Error::Degenerate("trim curve encloses no area".into()));
        }
        Ok(curve)
    }

    /// Piecewise-linear closed curve through `vertices`.
    pub fn polygon_curve(vertices: Vec<[f64; 2]>) -> Result<Self> {
        Self::new(vertices, 1)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn control(&self) -> &[[f64; 2]] {
        &self.control
    }

    /// Point at parameter `t`, periodic with period equal to the control count.
    pub fn evaluate(&self, t: f64) -> [f64; 2] {
        let m = self.control.len();
        let t = t.rem_euclid(m as f64);
        let i = (t.floor() as usize).min(m - 1);
        let s = t - i as f64;
        let c = |k: usize| self.control[(i + k) % m];
        let w: [f64; 4] = if self.degree == 1 {
            [1.0 - s, s, 0.0, 0.0]
        } else {
            cubic_weights(s)
        };
        let mut p = [0.0; 2];
        for (k, wk) in w.iter().enumerate() {
            if *wk != 0.0 {
                let ck = c(k);
                p[0] += wk * ck[0];
                p[1] += wk * ck[1];
            }
        }
        p
    }

    fn sample(&self) -> Vec<[f64; 2]> {
        let m = self.control.len();
        let per = if self.degree == 1 { 1 } else { SAMPLES_PER_SEGMENT };
        let mut pts: Vec<[f64; 2]> = (0..m * per)
            .map(|k| self.evaluate(k as f64 / per as f64))
            .collect();
        pts.push(pts[0]);
        pts
    }

    /// Closed sample polygon; the first and last entries coincide.
    pub fn polygon(&self) -> &[[f64; 2]] {
        &self.polygon
    }

    /// Enclosed area of the sampled curve.
    pub fn area(&self) -> f64 {
        polygon_area(&self.polygon).abs()
    }

    pub fn contains(&self, p: &[f64; 2]) -> bool {
        point_in_polygon(&self.polygon, p)
    }

    /// Curve with every control point mapped through `f`.
    pub fn map(&self, f: impl Fn(&[f64; 2]) -> [f64; 2]) -> Result<Self> {
        Self::new(self.control.iter().map(f).collect(), self.degree)
    }

    /// Sorted abscissas where the polygon crosses the horizontal line `y`.
    pub(crate) fn crossings(&self, y: f64) -> Vec<f64> {
        let mut xs: Vec<f64> = self
            .polygon
            .windows(2)
            .filter_map(|e| {
                let (a, b) = (e[0], e[1]);
                if (a[1] <= y) != (b[1] <= y) {
                    Some(a[0] + (y - a[1]) / (b[1] - a[1]) * (b[0] - a[0]))
                } else {
                    None
                }
            })
            .collect();
        xs.sort_by(f64::total_cmp);
        xs
    }

    /// Whether any two non-adjacent polygon edges intersect.
    pub fn is_self_intersecting(&self) -> bool {
        let e = self.polygon.len() - 1;
        for i in 0..e {
            for j in i + 2..e {
                if i == 0 && j == e - 1 {
                    continue;
                }
                if segments_cross(self.polygon[i], self.polygon[i + 1], self.polygon[j], self.polygon[j + 1]) {
                    return true;
                }
            }
        }
        false
    }
}

fn cubic_weights(s: f64) -> [f64; 4] {
    let s2 = s * s;
    let s3 = s2 * s;
    [
        (1.0 - s).powi(3) / 6.0,
        (3.0 * s3 - 6.0 * s2 + 4.0) / 6.0,
        (-3.0 * s3 + 3.0 * s2 + 3.0 * s + 1.0) / 6.0,
        s3 / 6.0,
    ]
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    use crate::local::delaunay::orient;
    let d1 = orient(&a, &b, &c);
    let d2 = orient(&a, &b, &d);
    let d3 = orient(&c, &d, &a);
    let d4 = orient(&c, &d, &b);
    (d1 > 0.0) != (d2 > 0.0) && (d3 > 0.0) != (d4 > 0.0) && d1 != 0.0 && d2 != 0.0 && d3 != 0.0 && d4 != 0.0
}

/// Signed shoelace area of a closed polygon (first vertex may be repeated).
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - a[1] * b[0]
        })
        .sum::<f64>()
        / 2.0
}

/// Even-odd rule point-in-polygon test.
pub fn point_in_polygon(poly: &[[f64; 2]], p: &[f64; 2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) && p[0] < (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0] {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Options for boundary extraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrimOptions {
    /// Triangles are peeled off the hull while their circumradius exceeds this
    /// multiple of the mean nearest-neighbor spacing.
    pub alpha_mult: f64,
    /// Upper bound on the number of arc-length samples fed to the curve fit.
    pub max_samples: usize,
}

impl Default for TrimOptions {
    fn default() -> Self {
        Self {
            alpha_mult: 4.0,
            max_samples: 400,
        }
    }
}

/// Fits a closed cubic trim curve to the uv boundary of an aligned cloud.
pub fn fit_trim_curve(cloud: &PointCloud) -> Result<TrimCurve> {
    fit_trim_curve_with(&cloud.uv(), TrimOptions::default())
}

pub fn fit_trim_curve_with(uv: &[[f64; 2]], opts: TrimOptions) -> Result<TrimCurve> {
    if uv.len() < 10 {
        return Err(Error::Parameter(format!("trim curve needs at least 10 points, got {}", uv.len())));
    }
    let boundary = boundary_loop(uv, opts.alpha_mult)?;
    let samples = resample_closed(&boundary, opts.max_samples.max(32));
    let m = (samples.len() / 2).max(8);
    fit_periodic_cubic(&samples, m)
}

/// Outer boundary of the alpha-peeled Delaunay triangulation, counter-clockwise.
pub(crate) fn boundary_loop(uv: &[[f64; 2]], alpha_mult: f64) -> Result<Vec<[f64; 2]>> {
    let tri = delaunay_2d(uv)?;
    let dup: std::collections::HashSet<usize> = tri.duplicates.iter().copied().collect();
    let unique: Vec<[f64; 2]> = (0..uv.len()).filter(|i| !dup.contains(i)).map(|i| uv[i]).collect();
    let tree = KdTree::new(unique.clone());
    let mean_nn = unique
        .iter()
        .enumerate()
        .map(|(i, p)| {
            tree.nearest_k(p, 2)
                .iter()
                .find(|n| n.index != i)
                .map_or(0.0, |n| n.dist_sq.sqrt())
        })
        .sum::<f64>()
        / unique.len() as f64;
    let radius = alpha_mult * mean_nn;

    let nt = tri.triangles.len();
    let mut removed = vec![false; nt];
    let mut queue: VecDeque<usize> = (0..nt)
        .filter(|&t| (0..3).any(|k| tri.neighbor(t, k).is_none()))
        .collect();
    while let Some(t) = queue.pop_front() {
        if removed[t] {
            continue;
        }
        let r = tri.circumradius(t);
        if r > radius || !r.is_finite() {
            removed[t] = true;
            for k in 0..3 {
                if let Some(nb) = tri.neighbor(t, k) {
                    if !removed[nb] {
                        queue.push_back(nb);
                    }
                }
            }
        }
    }
    if removed.iter().all(|&r| r) {
        return Err(Error::Degenerate("no triangles survive boundary extraction".into()));
    }

    let mut outgoing: HashMap<usize, Vec<usize>> = HashMap::new();
    for t in 0..nt {
        if removed[t] {
            continue;
        }
        for k in 0..3 {
            let open = tri.neighbor(t, k).is_none_or(|nb| removed[nb]);
            if open {
                let (a, b) = (tri.triangles[t][k], tri.triangles[t][(k + 1) % 3]);
                outgoing.entry(a).or_default().push(b);
            }
        }
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut starts: Vec<usize> = outgoing.keys().copied().collect();
    starts.sort_unstable();
    for s in starts {
        while let Some(first) = outgoing.get_mut(&s).and_then(|v| v.pop()) {
            let mut lp = vec![s];
            let mut cur = first;
            while cur != s {
                lp.push(cur);
                match outgoing.get_mut(&cur).and_then(|v| v.pop()) {
                    Some(next) => cur = next,
                    None => break,
                }
            }
            let poly: Vec<[f64; 2]> = lp.iter().map(|&i| uv[i]).collect();
            let area = polygon_area(&poly);
            if best.as_ref().is_none_or(|(a, _)| area > *a) {
                best = Some((area, lp));
            }
        }
    }
    match best {
        Some((area, lp)) if area > 0.0 && lp.len() >= 3 => Ok(lp.iter().map(|&i| uv[i]).collect()),
        _ => Err(Error::Degenerate("boundary has no enclosing loop".into())),
    }
}

/// Equal arc-length samples along a closed polygon (not repeated at the end).
fn resample_closed(poly: &[[f64; 2]], max_samples: usize) -> Vec<[f64; 2]> {
    let n = poly.len();
    let count = n.clamp(32, max_samples);
    let seg: Vec<f64> = (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
        })
        .collect();
    let total: f64 = seg.iter().sum();
    let mut out = Vec::with_capacity(count);
    let (mut i, mut acc) = (0usize, 0.0);
    for k in 0..count {
        let target = total * k as f64 / count as f64;
        while i < n - 1 && acc + seg[i] < target {
            acc += seg[i];
            i += 1;
        }
        let s = if seg[i] > 0.0 { ((target - acc) / seg[i]).clamp(0.0, 1.0) } else { 0.0 };
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        out.push([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]);
    }
    out
}

/// Least-squares closed uniform cubic B-spline with `m` control points through
/// samples spaced uniformly in parameter.
fn fit_periodic_cubic(samples: &[[f64; 2]], m: usize) -> Result<TrimCurve> {
    let n = samples.len();
    let mut a = DMatrix::zeros(n, m);
    for (k, _) in samples.iter().enumerate() {
        let t = k as f64 * m as f64 / n as f64;
        let i = (t.floor() as usize).min(m - 1);
        let w = cubic_weights(t - i as f64);
        for (j, wj) in w.iter().enumerate() {
            a[(k, (i + j) % m)] += wj;
        }
    }
    let ata = a.transpose() * &a;
    let chol = ata
        .cholesky()
        .ok_or_else(|| Error::Numerical("trim-curve normal equations are singular".into()))?;
    let mut control = vec![[0.0; 2]; m];
    for c in 0..2 {
        let b = DVector::from_iterator(n, samples.iter().map(|p| p[c]));
        let x = chol.solve(&(a.transpose() * b));
        for j in 0..m {
            control[j][c] = x[j];
        }
    }
    TrimCurve::new(control, 3)
}

/// Surface area over the parameter domain, restricted to cells whose centers
/// lie inside `trim` when one is given. Midpoint rule on `res x res` cells.
pub fn trimmed_area(surface: &ParametricSurface, trim: Option<&TrimCurve>, res: usize) -> Result<f64> {
    if res == 0 {
        return Err(Error::Parameter("quadrature resolution must be positive".into()));
    }
    let ((u0, u1), (v0, v1)) = surface.domain();
    let (du, dv) = ((u1 - u0) / res as f64, (v1 - v0) / res as f64);
    let mut total = 0.0;
    let mut cells = 0usize;
    for b in 0..res {
        let v = v0 + (b as f64 + 0.5) * dv;
        let xs = trim.map(|t| t.crossings(v));
        let mut next = 0;
        let mut inside = trim.is_none();
        for a in 0..res {
            let u = u0 + (a as f64 + 0.5) * du;
            if let Some(xs) = &xs {
                while next < xs.len() && xs[next] <= u {
                    inside = !inside;
                    next += 1;
                }
            }
            if inside {
                let (_, su, sv) = surface.derivatives(u, v)?;
                total += su.cross(&sv).norm() * du * dv;
                cells += 1;
            }
        }
    }
    if cells == 0 {
        return Err(Error::Degenerate("no quadrature cell lies inside the trim curve".into()));
    }
    Ok(total)
}
