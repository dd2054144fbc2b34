//! Grid resampling, parameterization, interpolation and least-squares fitting.

use nalgebra::{DMatrix, Point3};

use super::basis::KnotVector;
use super::surface::ParametricSurface;
use crate::error::{Error, Result};
use crate::geometry::spatial::KdTree;
use crate::geometry::PointCloud;

/// Complete `n_u x n_v` grid of samples with their surface parameters.
/// Points are row-major: index `k * n_v + l`, `k` along u.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSamples {
    pub n_u: usize,
    pub n_v: usize,
    pub points: Vec<Point3<f64>>,
    pub u_params: Vec<f64>,
    pub v_params: Vec<f64>,
}

impl GridSamples {
    /// Builds a grid and assigns averaged chord-length parameters.
    pub fn new(n_u: usize, n_v: usize, points: Vec<Point3<f64>>) -> Result<Self> {
        if n_u < 2 || n_v < 2 || points.len() != n_u * n_v {
            return Err(Error::Parameter(format!(
                "grid {n_u}x{n_v} does not match {} points",
                points.len()
            )));
        }
        let u_params = averaged_params(n_u, n_v, |k, l| points[k * n_v + l])?;
        let v_params = averaged_params(n_v, n_u, |l, k| points[k * n_v + l])?;
        Ok(Self {
            n_u,
            n_v,
            points,
            u_params,
            v_params,
        })
    }

    pub fn point(&self, k: usize, l: usize) -> Point3<f64> {
        self.points[k * self.n_v + l]
    }
}

/// Parameters along the first index, averaged over every line of the second.
fn averaged_params(n: usize, lines: usize, at: impl Fn(usize, usize) -> Point3<f64>) -> Result<Vec<f64>> {
    let mut sum = vec![0.0; n];
    let mut used = 0;
    for l in 0..lines {
        let row: Vec<Point3<f64>> = (0..n).map(|k| at(k, l)).collect();
        if let Ok(t) = chord_length_parameterize(&row) {
            for (s, t) in sum.iter_mut().zip(t) {
                *s += t;
            }
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::Degenerate("every grid line collapses to a point".into()));
    }
    let params: Vec<f64> = sum.iter().map(|s| s / used as f64).collect();
    if params.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Degenerate("grid parameters are not strictly increasing".into()));
    }
    Ok(params)
}

/// Parameters in [0, 1] proportional to cumulative chord length.
pub fn chord_length_parameterize(points: &[Point3<f64>]) -> Result<Vec<f64>> {
    if points.len() < 2 {
        return Err(Error::Parameter("chord-length parameters need at least 2 points".into()));
    }
    let mut cum = Vec::with_capacity(points.len());
    let mut total = 0.0;
    cum.push(0.0);
    for w in points.windows(2) {
        total += (w[1] - w[0]).norm();
        cum.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    let mut t: Vec<f64> = cum.iter().map(|c| c / total).collect();
    *t.last_mut().unwrap() = 1.0;
    Ok(t)
}

/// Resamples an aligned cloud onto a regular `n_u x n_v` grid over its uv
/// bounding box. Each node takes the inverse-distance-weighted mean height of
/// the points nearest to it; nodes without points copy the nearest filled node.
pub fn resample_to_grid(cloud: &PointCloud, n_u: usize, n_v: usize) -> Result<GridSamples> {
    if n_u < 2 || n_v < 2 {
        return Err(Error::Parameter(format!("grid must be at least 2x2, got {n_u}x{n_v}")));
    }
    let (lo, hi) = cloud.bounding_box();
    let (ext_u, ext_v) = (hi.x - lo.x, hi.y - lo.y);
    if !(ext_u > 0.0 && ext_v > 0.0) {
        return Err(Error::Degenerate("cloud has zero extent in u or v".into()));
    }
    let du = ext_u / (n_u - 1) as f64;
    let dv = ext_v / (n_v - 1) as f64;
    let node_u = |k: usize| if k == n_u - 1 { hi.x } else { lo.x + k as f64 * du };
    let node_v = |l: usize| if l == n_v - 1 { hi.y } else { lo.y + l as f64 * dv };

    let n = n_u * n_v;
    let mut wsum = vec![0.0; n];
    let mut zsum = vec![0.0; n];
    let mut exact = vec![0usize; n];
    let mut exact_sum = vec![0.0; n];
    let tol = 1e-12 * (du + dv);
    for p in cloud.points() {
        let k = (((p.x - lo.x) / du).round() as usize).min(n_u - 1);
        let l = (((p.y - lo.y) / dv).round() as usize).min(n_v - 1);
        let idx = k * n_v + l;
        let d = ((p.x - node_u(k)).powi(2) + (p.y - node_v(l)).powi(2)).sqrt();
        if d <= tol {
            exact[idx] += 1;
            exact_sum[idx] += p.z;
        } else {
            let w = 1.0 / (d * d);
            wsum[idx] += w;
            zsum[idx] += w * p.z;
        }
    }
    let mut height: Vec<Option<f64>> = (0..n)
        .map(|i| {
            if exact[i] > 0 {
                Some(exact_sum[i] / exact[i] as f64)
            } else if wsum[i] > 0.0 {
                Some(zsum[i] / wsum[i])
            } else {
                None
            }
        })
        .collect();

    let filled: Vec<usize> = (0..n).filter(|&i| height[i].is_some()).collect();
    if filled.len() < n {
        let coords = |i: usize| [node_u(i / n_v), node_v(i % n_v)];
        let tree = KdTree::new(filled.iter().map(|&i| coords(i)).collect());
        for i in 0..n {
            if height[i].is_none() {
                let nearest = tree.nearest(&coords(i)).expect("at least one filled node");
                height[i] = height[filled[nearest.index]];
            }
        }
    }
    let points = (0..n)
        .map(|i| Point3::new(node_u(i / n_v), node_v(i % n_v), height[i].unwrap()))
        .collect();
    GridSamples::new(n_u, n_v, points)
}

fn collocation(knots: &KnotVector, params: &[f64]) -> DMatrix<f64> {
    let n = knots.n_basis();
    let mut m = DMatrix::zeros(params.len(), n);
    for (r, &t) in params.iter().enumerate() {
        for (c, v) in knots.basis_row(t).into_iter().enumerate() {
            m[(r, c)] = v;
        }
    }
    m
}

/// Data matrix with one row per first-index sample and `3 * lines` columns.
fn stack(n: usize, lines: usize, at: impl Fn(usize, usize) -> Point3<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(n, 3 * lines, |k, c| at(k, c / 3)[c % 3])
}

fn solve_square(a: DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let lu = a.lu();
    lu.solve(b)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Numerical("singular interpolation system".into()))
}

/// Least-squares solution of `a x = b` by Householder QR.
pub(crate) fn solve_least_squares(a: DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let ncols = a.ncols();
    let qr = a.qr();
    let r = qr.r();
    let diag_max = (0..ncols).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..ncols).any(|i| r[(i, i)].abs() <= 1e-12 * diag_max) || diag_max == 0.0 {
        return Err(Error::Numerical("rank-deficient least-squares system".into()));
    }
    let qtb = qr.q().transpose() * b;
    r.solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))
}

fn check_degrees(grid: &GridSamples, p: usize, q: usize) -> Result<()> {
    if grid.n_u <= p || grid.n_v <= q {
        return Err(Error::Parameter(format!(
            "grid {}x{} too small for degrees ({p}, {q})",
            grid.n_u, grid.n_v
        )));
    }
    Ok(())
}

/// Separable tensor-product fit: solve along u for every v line, then along v.
fn separable_fit(
    grid: &GridSamples,
    ku: &KnotVector,
    kv: &KnotVector,
    solve: impl Fn(DMatrix<f64>, &DMatrix<f64>) -> Result<DMatrix<f64>>,
) -> Result<Vec<Point3<f64>>> {
    let (cu, cv) = (ku.n_basis(), kv.n_basis());
    let q = stack(grid.n_u, grid.n_v, |k, l| grid.point(k, l));
    let r = solve(collocation(ku, &grid.u_params), &q)?;
    // r is cu x (3 n_v); regroup to n_v x (3 cu) for the second pass.
    let t = DMatrix::from_fn(grid.n_v, 3 * cu, |l, c| r[(c / 3, 3 * l + c % 3)]);
    let p = solve(collocation(kv, &grid.v_params), &t)?;
    let mut control = Vec::with_capacity(cu * cv);
    for i in 0..cu {
        for j in 0..cv {
            control.push(Point3::new(p[(j, 3 * i)], p[(j, 3 * i + 1)], p[(j, 3 * i + 2)]));
        }
    }
    Ok(control)
}

/// Interpolating tensor-product B-spline through every grid sample.
pub fn fit_bspline_interp(grid: &GridSamples, p: usize, q: usize) -> Result<ParametricSurface> {
    check_degrees(grid, p, q)?;
    let ku = KnotVector::averaging(&grid.u_params, p)?;
    let kv = KnotVector::averaging(&grid.v_params, q)?;
    let control = separable_fit(grid, &ku, &kv, solve_square)?;
    ParametricSurface::polynomial(control, ku, kv)
}

fn approx_knots(grid: &GridSamples, p: usize, q: usize, cu: usize, cv: usize) -> Result<(KnotVector, KnotVector)> {
    check_degrees(grid, p, q)?;
    if cu > grid.n_u || cv > grid.n_v {
        return Err(Error::Parameter(format!(
            "control net {cu}x{cv} exceeds grid {}x{}",
            grid.n_u, grid.n_v
        )));
    }
    Ok((
        KnotVector::approximating(&grid.u_params, cu, p)?,
        KnotVector::approximating(&grid.v_params, cv, q)?,
    ))
}

/// Polynomial B-spline least-squares approximation with a `cu x cv` control
/// net, solved separably along u then v.
pub fn fit_bspline_approx(grid: &GridSamples, p: usize, q: usize, cu: usize, cv: usize) -> Result<ParametricSurface> {
    let (ku, kv) = approx_knots(grid, p, q, cu, cv)?;
    let control = separable_fit(grid, &ku, &kv, solve_least_squares)?;
    ParametricSurface::polynomial(control, ku, kv)
}

/// Rational least-squares approximation with fixed control weights
/// (`cu x cv`, row-major). All control points are solved for jointly.
pub fn fit_nurbs_approx(
    grid: &GridSamples,
    p: usize,
    q: usize,
    cu: usize,
    cv: usize,
    weights: &[f64],
) -> Result<ParametricSurface> {
    let (ku, kv) = approx_knots(grid, p, q, cu, cv)?;
    if weights.len() != cu * cv {
        return Err(Error::Parameter(format!(
            "expected {} weights, got {}",
            cu * cv,
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::Parameter("weights must be finite and positive".into()));
    }
    let nu = collocation(&ku, &grid.u_params);
    let nv = collocation(&kv, &grid.v_params);
    let rows = grid.n_u * grid.n_v;
    let mut a = DMatrix::zeros(rows, cu * cv);
    for k in 0..grid.n_u {
        for l in 0..grid.n_v {
            let row = k * grid.n_v + l;
            let mut den = 0.0;
            for i in 0..cu {
                let bi = nu[(k, i)];
                if bi == 0.0 {
                    continue;
                }
                for j in 0..cv {
                    let v = bi * nv[(l, j)] * weights[i * cv + j];
                    a[(row, i * cv + j)] = v;
                    den += v;
                }
            }
            for c in 0..cu * cv {
                a[(row, c)] /= den;
            }
        }
    }
    let b = DMatrix::from_fn(rows, 3, |r, c| grid.points[r][c]);
    let x = solve_least_squares(a, &b)?;
    let control = (0..cu * cv)
        .map(|i| Point3::new(x[(i, 0)], x[(i, 1)], x[(i, 2)]))
        .collect();
    ParametricSurface::new(control, weights.to_vec(), ku, kv)
}
