//! Discrete smoothing D²-spline over the uv plane.
//!
//! The height field is a thin-plate spline with an affine part,
//! `f(x) = sum_j c_j G(|x - t_j|) + d_0 + d_1 u + d_2 v`, where
//! `G(r) = r^2 ln r / (8 pi)` and `sum c_j = sum c_j t_j = 0`. For such `f` the
//! thin-plate bending energy over the plane equals `c^T K c`, so fitting is a
//! penalized regression
//!
//! ```text
//! min |w - f(x)|^2 + alpha * J(f)
//! ```
//!
//! Coefficients are rewritten in the eigenbasis of the penalty, which turns the
//! problem into ridge regression. A second eigendecomposition of the
//! ridge Gram matrix diagonalizes the influence matrix for every alpha at once,
//! so the GCV curve costs one factorization and gives an exact trace.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, Par, Side};
use log::{info, warn};
use nalgebra::{Matrix3, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, TriangleMesh};
use crate::spline::{fit_trim_curve, grid_mesh, TrimCurve};

const BLOCK_ROWS: usize = 1024;

/// How the influence-matrix trace is obtained during GCV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TraceEstimator {
    /// Closed form from the eigenvalues of the ridge Gram matrix.
    #[default]
    Exact,
    /// Hutchinson estimate with Rademacher probes.
    Hutchinson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct D2Config {
    /// Fixed smoothing parameter; GCV over the grid when `None`.
    pub alpha: Option<f64>,
    pub alpha_grid_min: f64,
    pub alpha_grid_max: f64,
    pub alpha_grid_count: usize,
    pub max_centers: usize,
    pub trace: TraceEstimator,
    pub trace_probes: usize,
    pub trace_estimator_seed: u64,
    /// Per-axis cell count of the output mesh.
    pub mesh_res: usize,
}

impl Default for D2Config {
    fn default() -> Self {
        Self {
            alpha: None,
            alpha_grid_min: 1e-6,
            alpha_grid_max: 1e6,
            alpha_grid_count: 13,
            max_centers: 1500,
            trace: TraceEstimator::Exact,
            trace_probes: 32,
            trace_estimator_seed: 0,
            mesh_res: 100,
        }
    }
}

impl D2Config {
    pub fn alpha_grid(&self) -> Result<Vec<f64>> {
        log_alpha_grid(self.alpha_grid_min, self.alpha_grid_max, self.alpha_grid_count)
    }
}

/// `count` log-spaced values from `min` to `max` inclusive.
pub fn log_alpha_grid(min: f64, max: f64, count: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && max >= min && max.is_finite()) || count == 0 {
        return Err(Error::Parameter(format!(
            "alpha grid needs 0 < min <= max and count >= 1, got [{min}, {max}] x {count}"
        )));
    }
    if count == 1 {
        return Ok(vec![min]);
    }
    let (a, b) = (min.ln(), max.ln());
    Ok((0..count)
        .map(|k| {
            if k + 1 == count {
                max
            } else {
                (a + (b - a) * k as f64 / (count - 1) as f64).exp()
            }
        })
        .collect())
}

/// GCV score at one alpha.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GcvPoint {
    pub alpha: f64,
    pub score: f64,
    pub rss: f64,
    /// `tr(H)` as used in the score.
    pub trace: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingSelection {
    pub alpha: f64,
    /// `(alpha, score)` for every alpha that was not skipped.
    pub gcv_scores: Vec<(f64, f64)>,
}

/// Smooth explicit surface `w = f(u, v)`.
#[derive(Debug, Clone)]
pub struct HeightField {
    offset: [f64; 2],
    scale: f64,
    centers: Vec<[f64; 2]>,
    coeffs: Vec<f64>,
    affine: [f64; 3],
    domain: ([f64; 2], [f64; 2]),
    pub alpha: f64,
    /// Residual sum of squares at the data sites.
    pub misfit: f64,
    /// Thin-plate bending energy in input units.
    pub bending_energy: f64,
}

fn tps_kernel(r2: f64) -> f64 {
    if r2 > 0.0 {
        r2 * r2.ln() / (16.0 * std::f64::consts::PI)
    } else {
        0.0
    }
}

fn dist2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

impl HeightField {
    fn to_scaled(&self, u: f64, v: f64) -> [f64; 2] {
        [(u - self.offset[0]) / self.scale, (v - self.offset[1]) / self.scale]
    }

    pub fn evaluate(&self, u: f64, v: f64) -> f64 {
        let x = self.to_scaled(u, v);
        let radial: f64 = self
            .centers
            .iter()
            .zip(&self.coeffs)
            .map(|(t, c)| c * tps_kernel(dist2(&x, t)))
            .sum();
        radial + self.affine[0] + self.affine[1] * x[0] + self.affine[2] * x[1]
    }

    /// Bounding box `(lo, hi)` of the data sites.
    pub fn domain(&self) -> ([f64; 2], [f64; 2]) {
        self.domain
    }

    pub fn n_centers(&self) -> usize {
        self.centers.len()
    }
}

/// Farthest-point subsample of `sites`, starting from the first site. Stops
/// early once every remaining site coincides with a chosen one.
fn farthest_point_centers(sites: &[[f64; 2]], max: usize) -> Vec<usize> {
    let mut chosen = vec![0];
    let mut d: Vec<f64> = sites.iter().map(|p| dist2(p, &sites[0])).collect();
    while chosen.len() < max {
        let (next, &far) = d
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .unwrap();
        if far <= 0.0 {
            break;
        }
        chosen.push(next);
        for (di, p) in d.iter_mut().zip(sites) {
            *di = di.min(dist2(p, &sites[next]));
        }
    }
    chosen
}

/// Alpha-independent factorization of the smoothing problem for fixed sites.
#[derive(Debug, Clone)]
pub struct D2Smoother {
    offset: [f64; 2],
    scale: f64,
    domain: ([f64; 2], [f64; 2]),
    sites: Vec<[f64; 2]>,
    centers: Vec<[f64; 2]>,
    /// Maps ridge coordinates to radial coefficients (`n_centers x r`).
    basis: Mat<f64>,
    /// Eigenvectors of the ridge Gram matrix (`r x r`).
    gram_vecs: Mat<f64>,
    gram_vals: Vec<f64>,
    /// `E^T P` and `(P^T P)^-1`.
    ep: Mat<f64>,
    pp_inv: Matrix3<f64>,
    /// Center kernel matrix, for the bending energy.
    kernel: Mat<f64>,
}

/// `E^T Y` and `P^T Y` for data columns `Y`.
struct Projection {
    ey: Mat<f64>,
    py: Mat<f64>,
}

impl D2Smoother {
    pub fn new(uv: &[[f64; 2]], max_centers: usize) -> Result<Self> {
        if uv.len() < 4 {
            return Err(Error::Parameter(format!("D2-spline needs at least 4 sites, got {}", uv.len())));
        }
        if max_centers < 3 {
            return Err(Error::Parameter(format!("max_centers must be at least 3, got {max_centers}")));
        }
        if uv.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::Parameter("non-finite site".into()));
        }
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in uv {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let offset = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
        let scale = ((hi[0] - lo[0]).max(hi[1] - lo[1]) / 2.0).max(f64::MIN_POSITIVE);
        let sites: Vec<[f64; 2]> = uv
            .iter()
            .map(|p| [(p[0] - offset[0]) / scale, (p[1] - offset[1]) / scale])
            .collect();

        let centers: Vec<[f64; 2]> = farthest_point_centers(&sites, max_centers)
            .into_iter()
            .map(|i| sites[i])
            .collect();
        let n = centers.len();
        if n < 3 {
            return Err(Error::Degenerate("fewer than 3 distinct uv sites".into()));
        }
        let t = Mat::from_fn(n, 3, |i, j| [1.0, centers[i][0], centers[i][1]][j]);
        let kernel = Mat::from_fn(n, n, |i, j| tps_kernel(dist2(&centers[i], &centers[j])));

        // Penalty restricted to the null space of T^T, in its eigenbasis.
        let q = t.qr().compute_Q();
        let z = q.subcols(3, n - 3).to_owned();
        let kz = &kernel * &z;
        let a = z.transpose() * &kz;
        let eig = a
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Numerical(format!("penalty eigendecomposition failed: {e:?}")))?;
        let lam = eig.S().column_vector();
        let lam_max = (0..n - 3).map(|k| lam[k]).fold(0.0, f64::max);
        let keep: Vec<usize> = (0..n - 3).filter(|&k| lam[k] > 1e-13 * lam_max).collect();
        let u = eig.U();
        let scaled_vecs = Mat::from_fn(n - 3, keep.len(), |i, j| u[(i, keep[j])] / lam[keep[j]].sqrt());
        let basis = &z * &scaled_vecs;

        // Pass over the sites: E^T E, E^T P, P^T P.
        let mut ee = Mat::<f64>::zeros(n, n);
        let mut ep = Mat::<f64>::zeros(n, 3);
        let mut pp = Matrix3::<f64>::zeros();
        for start in (0..sites.len()).step_by(BLOCK_ROWS) {
            let rows = &sites[start..(start + BLOCK_ROWS).min(sites.len())];
            let e = Mat::from_fn(rows.len(), n, |i, j| tps_kernel(dist2(&rows[i], &centers[j])));
            let p = Mat::from_fn(rows.len(), 3, |i, j| [1.0, rows[i][0], rows[i][1]][j]);
            matmul(&mut ee, Accum::Add, e.transpose(), &e, 1.0, Par::Seq);
            matmul(&mut ep, Accum::Add, e.transpose(), &p, 1.0, Par::Seq);
            for r in rows {
                let v = Vector3::new(1.0, r[0], r[1]);
                pp += v * v.transpose();
            }
        }
        let pp_inv = pp_inverse(&pp)?;
        let pp_inv_mat = Mat::from_fn(3, 3, |i, j| pp_inv[(i, j)]);
        let schur = &ee - &ep * (&pp_inv_mat * ep.transpose());
        let gram = basis.transpose() * (&schur * &basis);
        let geig = gram
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Numerical(format!("ridge eigendecomposition failed: {e:?}")))?;
        let gram_vals = (0..gram.nrows()).map(|k| geig.S().column_vector()[k].max(0.0)).collect();
        Ok(Self {
            offset,
            scale,
            domain: (lo, hi),
            sites,
            centers,
            basis,
            gram_vecs: geig.U().to_owned(),
            gram_vals,
            ep,
            pp_inv,
            kernel,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn n_centers(&self) -> usize {
        self.centers.len()
    }

    /// Ridge parameter in scaled coordinates. Second derivatives scale as
    /// `1/s^2` and area as `s^2`, so the energy scales as `1/s^2`.
    fn ridge(&self, alpha: f64) -> f64 {
        alpha / (self.scale * self.scale)
    }

    /// Exact `tr(H_alpha)`.
    pub fn trace(&self, alpha: f64) -> f64 {
        let a = self.ridge(alpha);
        3.0 + self.gram_vals.iter().map(|&m| m / (m + a)).sum::<f64>()
    }

    fn project(&self, ys: &Mat<f64>) -> Projection {
        let n = self.centers.len();
        let k = ys.ncols();
        let mut ey = Mat::<f64>::zeros(n, k);
        let mut py = Mat::<f64>::zeros(3, k);
        for start in (0..self.sites.len()).step_by(BLOCK_ROWS) {
            let end = (start + BLOCK_ROWS).min(self.sites.len());
            let rows = &self.sites[start..end];
            let e = Mat::from_fn(rows.len(), n, |i, j| tps_kernel(dist2(&rows[i], &self.centers[j])));
            let yb = ys.subrows(start, end - start);
            matmul(&mut ey, Accum::Add, e.transpose(), yb, 1.0, Par::Seq);
            for (i, r) in rows.iter().enumerate() {
                for c in 0..k {
                    let y = yb[(i, c)];
                    py[(0, c)] += y;
                    py[(1, c)] += r[0] * y;
                    py[(2, c)] += r[1] * y;
                }
            }
        }
        Projection { ey, py }
    }

    /// Coordinates `W^T B^T (E^T y - E^T P (P^T P)^-1 P^T y)` of each data column.
    fn spectral(&self, proj: &Projection) -> Mat<f64> {
        let pp_inv = Mat::from_fn(3, 3, |i, j| self.pp_inv[(i, j)]);
        let resid = &proj.ey - &self.ep * (&pp_inv * &proj.py);
        self.gram_vecs.transpose() * (self.basis.transpose() * &resid)
    }

    fn coefficients(&self, g: &[f64], py: [f64; 3], alpha: f64) -> (Vec<f64>, [f64; 3]) {
        let a = self.ridge(alpha);
        let r = self.gram_vals.len();
        let scaled = Mat::from_fn(r, 1, |k, _| g[k] / (self.gram_vals[k] + a));
        let c = &self.basis * (&self.gram_vecs * &scaled);
        let coeffs: Vec<f64> = (0..c.nrows()).map(|i| c[(i, 0)]).collect();
        // d = (P^T P)^-1 (P^T y - P^T E c)
        let mut rhs = Vector3::from(py);
        for (j, cj) in coeffs.iter().enumerate() {
            for i in 0..3 {
                rhs[i] -= self.ep[(j, i)] * cj;
            }
        }
        let d = self.pp_inv * rhs;
        (coeffs, [d[0], d[1], d[2]])
    }

    fn field(&self, coeffs: Vec<f64>, affine: [f64; 3], alpha: f64) -> HeightField {
        let n = coeffs.len();
        let c = Mat::from_fn(n, 1, |i, _| coeffs[i]);
        let kc = &self.kernel * &c;
        let energy: f64 = (0..n).map(|i| coeffs[i] * kc[(i, 0)]).sum::<f64>() / (self.scale * self.scale);
        HeightField {
            offset: self.offset,
            scale: self.scale,
            centers: self.centers.clone(),
            coeffs,
            affine,
            domain: self.domain,
            alpha,
            misfit: f64::NAN,
            bending_energy: energy.max(0.0),
        }
    }

    /// Fitted values at the sites for each field.
    fn fitted(&self, fields: &[HeightField]) -> Vec<Vec<f64>> {
        let n = self.centers.len();
        let k = fields.len();
        let c = Mat::from_fn(n, k, |i, j| fields[j].coeffs[i]);
        let mut out = vec![Vec::with_capacity(self.sites.len()); k];
        for start in (0..self.sites.len()).step_by(BLOCK_ROWS) {
            let rows = &self.sites[start..(start + BLOCK_ROWS).min(self.sites.len())];
            let e = Mat::from_fn(rows.len(), n, |i, j| tps_kernel(dist2(&rows[i], &self.centers[j])));
            let ec = &e * &c;
            for (i, r) in rows.iter().enumerate() {
                for (j, f) in fields.iter().enumerate() {
                    out[j].push(ec[(i, j)] + f.affine[0] + f.affine[1] * r[0] + f.affine[2] * r[1]);
                }
            }
        }
        out
    }

    fn check_data(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.sites.len() {
            return Err(Error::Parameter(format!(
                "expected {} heights, got {}",
                self.sites.len(),
                w.len()
            )));
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parameter("non-finite height".into()));
        }
        Ok(())
    }

    /// Penalized fits of `w` for each alpha, with their misfit filled in.
    pub fn fit_many(&self, w: &[f64], alphas: &[f64]) -> Result<Vec<HeightField>> {
        self.check_data(w)?;
        if let Some(a) = alphas.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
            return Err(Error::Parameter(format!("alpha must be positive, got {a}")));
        }
        let ys = Mat::from_fn(w.len(), 1, |i, _| w[i]);
        let proj = self.project(&ys);
        let g = self.spectral(&proj);
        let g: Vec<f64> = (0..g.nrows()).map(|k| g[(k, 0)]).collect();
        let py = [proj.py[(0, 0)], proj.py[(1, 0)], proj.py[(2, 0)]];
        let mut fields: Vec<HeightField> = alphas
            .iter()
            .map(|&alpha| {
                let (c, d) = self.coefficients(&g, py, alpha);
                self.field(c, d, alpha)
            })
            .collect();
        let fits = self.fitted(&fields);
        for (f, fit) in fields.iter_mut().zip(fits) {
            f.misfit = fit.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum();
        }
        Ok(fields)
    }

    pub fn fit(&self, w: &[f64], alpha: f64) -> Result<HeightField> {
        Ok(self.fit_many(w, &[alpha])?.remove(0))
    }

    /// Fitted values of `field` at the sites.
    pub fn fitted_values(&self, field: &HeightField) -> Vec<f64> {
        self.fitted(std::slice::from_ref(field)).remove(0)
    }

    /// Hutchinson estimates of `tr(H_alpha)` for each alpha from shared probes.
    pub fn trace_hutchinson(&self, alphas: &[f64], probes: usize, seed: u64) -> Vec<f64> {
        let m = self.sites.len();
        let probes = probes.max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = Mat::from_fn(m, probes, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
        let proj = self.project(&z);
        let g = self.spectral(&proj);
        alphas
            .iter()
            .map(|&alpha| {
                let a = self.ridge(alpha);
                let mut total = 0.0;
                for c in 0..probes {
                    let pz = Vector3::new(proj.py[(0, c)], proj.py[(1, c)], proj.py[(2, c)]);
                    total += pz.dot(&(self.pp_inv * pz));
                    total += (0..g.nrows())
                        .map(|k| g[(k, c)] * g[(k, c)] / (self.gram_vals[k] + a))
                        .sum::<f64>();
                }
                total / probes as f64
            })
            .collect()
    }

    /// GCV over `alphas`. Scores at alphas with `tr(I - H)` near zero are
    /// skipped. Residuals at round-off level count as exact fits, so a
    /// noise-free affine input ties at zero and the smallest alpha wins.
    pub fn gcv(
        &self,
        w: &[f64],
        alphas: &[f64],
        trace: TraceEstimator,
        probes: usize,
        seed: u64,
    ) -> Result<(SmoothingSelection, Vec<GcvPoint>, Vec<HeightField>)> {
        if alphas.is_empty() {
            return Err(Error::Parameter("alpha grid is empty".into()));
        }
        let fields = self.fit_many(w, alphas)?;
        let m = w.len() as f64;
        let traces = match trace {
            TraceEstimator::Exact => alphas.iter().map(|&a| self.trace(a)).collect(),
            TraceEstimator::Hutchinson => self.trace_hutchinson(alphas, probes, seed),
        };
        let w_max = w.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        let roundoff = m * (1e-10 * w_max.max(f64::MIN_POSITIVE)).powi(2);
        let mut points = Vec::new();
        for ((&alpha, f), tr) in alphas.iter().zip(&fields).zip(traces) {
            let free = m - tr;
            if free <= 1e-8 * m {
                warn!("GCV: tr(I - H) = {free:.3e} at alpha {alpha:.3e}; skipped");
                continue;
            }
            let rss = if f.misfit <= roundoff { 0.0 } else { f.misfit };
            let score = (rss / m) / (free / m).powi(2);
            points.push(GcvPoint { alpha, score, rss, trace: tr });
        }
        let best = points
            .iter()
            .fold(None::<&GcvPoint>, |best, p| match best {
                Some(b) if b.score <= p.score => Some(b),
                _ => Some(p),
            })
            .ok_or_else(|| Error::Numerical("GCV skipped every alpha in the grid".into()))?;
        let selection = SmoothingSelection {
            alpha: best.alpha,
            gcv_scores: points.iter().map(|p| (p.alpha, p.score)).collect(),
        };
        Ok((selection, points, fields))
    }
}

fn pp_inverse(pp: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let eig = pp.symmetric_eigen();
    let max = eig.eigenvalues.max();
    if !(eig.eigenvalues.min() > 1e-12 * max) {
        return Err(Error::Degenerate("uv sites are collinear".into()));
    }
    pp.try_inverse()
        .ok_or_else(|| Error::Degenerate("uv sites are collinear".into()))
}

fn heights(cloud: &PointCloud) -> Vec<f64> {
    cloud.points().iter().map(|p| p.z).collect()
}

/// Penalized thin-plate fit of the heights of an aligned cloud.
pub fn fit_d2_spline(cloud: &PointCloud, alpha: f64) -> Result<HeightField> {
    let smoother = D2Smoother::new(&cloud.uv(), D2Config::default().max_centers)?;
    smoother.fit(&heights(cloud), alpha)
}

/// Smoothing parameter minimizing GCV over `alpha_grid`, exact trace.
pub fn gcv_select_alpha(cloud: &PointCloud, alpha_grid: &[f64]) -> Result<SmoothingSelection> {
    let smoother = D2Smoother::new(&cloud.uv(), D2Config::default().max_centers)?;
    Ok(smoother.gcv(&heights(cloud), alpha_grid, TraceEstimator::Exact, 0, 0)?.0)
}

/// Triangulated `res x res` sampling of `field` over the cloud's uv bounding
/// box, restricted to the cloud's trim curve when one can be fitted.
pub fn height_field_to_mesh(field: &HeightField, cloud: &PointCloud, res: usize) -> Result<TriangleMesh> {
    let trim = match fit_trim_curve(cloud) {
        Ok(t) => Some(t),
        Err(e) => {
            warn!("trim curve unavailable, meshing the full uv box: {e}");
            None
        }
    };
    mesh_with_trim(field, trim.as_ref(), res)
}

fn mesh_with_trim(field: &HeightField, trim: Option<&TrimCurve>, res: usize) -> Result<TriangleMesh> {
    let (lo, hi) = field.domain();
    grid_mesh(res, lo, hi, |u, v| trim.is_none_or(|t| t.contains(&[u, v])), |u, v| {
        Ok(Point3::new(u, v, field.evaluate(u, v)))
    })
}

#[derive(Debug, Clone)]
pub struct D2Reconstruction {
    pub field: HeightField,
    pub selection: Option<SmoothingSelection>,
    pub mesh: TriangleMesh,
}

/// Fit with a fixed alpha or GCV selection, then mesh inside the trim curve.
pub fn reconstruct_d2s(cloud: &PointCloud, cfg: &D2Config) -> Result<D2Reconstruction> {
    let smoother = D2Smoother::new(&cloud.uv(), cfg.max_centers)?;
    let w = heights(cloud);
    let (field, selection) = match cfg.alpha {
        Some(alpha) => (smoother.fit(&w, alpha)?, None),
        None => {
            let grid = cfg.alpha_grid()?;
            let (sel, _, fields) = smoother.gcv(&w, &grid, cfg.trace, cfg.trace_probes, cfg.trace_estimator_seed)?;
            let field = fields.into_iter().find(|f| f.alpha == sel.alpha).unwrap();
            info!("D2-spline: GCV selected alpha {:.3e}", sel.alpha);
            (field, Some(sel))
        }
    };
    let mesh = height_field_to_mesh(&field, cloud, cfg.mesh_res)?;
    Ok(D2Reconstruction { field, selection, mesh })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn sites(n: usize, seed: u64) -> Vec<[f64; 2]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect()
    }

    fn cloud(uv: &[[f64; 2]], w: &[f64]) -> PointCloud {
        PointCloud::new(uv.iter().zip(w).map(|(p, z)| Point3::new(p[0], p[1], *z)).collect()).unwrap()
    }

    fn noise(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, sigma).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    fn rms(a: &[f64], b: &[f64]) -> f64 {
        (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
    }

    /// Least-squares plane residual sum of squares via nalgebra.
    fn ls_plane_rss(uv: &[[f64; 2]], w: &[f64]) -> f64 {
        let a = nalgebra::DMatrix::from_fn(uv.len(), 3, |i, j| [1.0, uv[i][0], uv[i][1]][j]);
        let b = nalgebra::DVector::from_column_slice(w);
        let x = a.clone().svd(true, true).solve(&b, 1e-14).unwrap();
        (a * x - b).norm_squared()
    }

    #[test]
    fn alpha_grid_is_log_spaced() {
        let g = log_alpha_grid(1e-6, 1e6, 13).unwrap();
        assert_eq!(g.len(), 13);
        for (k, a) in g.iter().enumerate() {
            assert!((a.log10() - (k as f64 - 6.0)).abs() < 1e-12);
        }
        assert!(log_alpha_grid(0.0, 1.0, 3).is_err());
        assert!(log_alpha_grid(1.0, 0.5, 3).is_err());
    }

    #[test]
    fn kernel_matches_definition() {
        let r: f64 = 1.7;
        let g = tps_kernel(r * r);
        assert!((g - r * r * r.ln() / (8.0 * std::f64::consts::PI)).abs() < 1e-15);
        assert_eq!(tps_kernel(0.0), 0.0);
    }

    #[test]
    fn too_few_or_collinear_sites() {
        assert!(D2Smoother::new(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], 100).is_err());
        let line: Vec<[f64; 2]> = (0..20).map(|i| [i as f64, 2.0 * i as f64]).collect();
        assert!(matches!(D2Smoother::new(&line, 100), Err(Error::Degenerate(_))));
    }

    #[test]
    fn plane_reproduced_for_any_alpha() {
        let uv = sites(150, 1);
        let w: Vec<f64> = uv.iter().map(|p| 2.0 - 0.4 * p[0] + 1.3 * p[1]).collect();
        let s = D2Smoother::new(&uv, 1500).unwrap();
        for f in s.fit_many(&w, &[1e-8, 1.0, 1e8]).unwrap() {
            assert!(rms(&s.fitted_values(&f), &w) < 1e-6, "alpha {}", f.alpha);
            assert!((f.evaluate(0.3, 0.8) - (2.0 - 0.12 + 1.04)).abs() < 1e-6);
            assert!(f.bending_energy < 1e-10);
        }
    }

    #[test]
    fn huge_alpha_tends_to_ls_plane() {
        let uv = sites(200, 2);
        let w: Vec<f64> = uv.iter().map(|p| (3.0 * p[0]).sin() * p[1]).collect();
        let s = D2Smoother::new(&uv, 1500).unwrap();
        let f = s.fit(&w, 1e9).unwrap();
        let oracle = ls_plane_rss(&uv, &w);
        assert!((f.misfit - oracle).abs() <= 0.01 * oracle, "{} vs {}", f.misfit, oracle);
    }

    #[test]
    fn misfit_and_energy_are_monotone_in_alpha() {
        let uv = sites(200, 3);
        let eps = noise(200, 0.02, 4);
        let w: Vec<f64> = uv.iter().zip(&eps).map(|(p, e)| p[0] * p[0] - p[0] * p[1] + e).collect();
        let s = D2Smoother::new(&uv, 1500).unwrap();
        let fields = s.fit_many(&w, &[1e-4, 1e-2, 1.0, 1e2, 1e4]).unwrap();
        for pair in fields.windows(2) {
            assert!(pair[1].misfit >= pair[0].misfit * (1.0 - 1e-9));
            assert!(pair[1].bending_energy <= pair[0].bending_energy * (1.0 + 1e-9) + 1e-14);
        }
    }

    #[test]
    fn explicit_influence_matrix_matches() {
        let m = 120;
        let uv = sites(m, 5);
        let w: Vec<f64> = uv.iter().map(|p| (p[0] * 4.0).cos() + p[1]).collect();
        let s = D2Smoother::new(&uv, 1500).unwrap();
        let alpha = 1e-3;
        // Column j of H is the fit of the j-th unit vector.
        let mut h = vec![vec![0.0; m]; m];
        for j in 0..m {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            let col = s.fitted_values(&s.fit(&e, alpha).unwrap());
            for i in 0..m {
                h[i][j] = col[i];
            }
        }
        let hw: Vec<f64> = (0..m).map(|i| (0..m).map(|j| h[i][j] * w[j]).sum()).collect();
        let fitted = s.fitted_values(&s.fit(&w, alpha).unwrap());
        assert!(hw.iter().zip(&fitted).all(|(a, b)| (a - b).abs() < 1e-8));
        let tr: f64 = (0..m).map(|i| h[i][i]).sum();
        assert!((tr - s.trace(alpha)).abs() < 1e-8, "{tr} vs {}", s.trace(alpha));
        for i in 0..m {
            for j in 0..i {
                assert!((h[i][j] - h[j][i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn hutchinson_tracks_exact_trace() {
        let uv = sites(300, 6);
        let s = D2Smoother::new(&uv, 1500).unwrap();
        let alphas = [1e-4, 1e-1, 1e2];
        let est = s.trace_hutchinson(&alphas, 400, 7);
        let probes = 400.0;
        for (a, e) in alphas.iter().zip(est) {
            let exact = s.trace(*a);
            // Rademacher variance is at most 2 |H|_F^2 per probe.
            let r = s.ridge(*a);
            let frob2 = 3.0 + s.gram_vals.iter().map(|m| (m / (m + r)).powi(2)).sum::<f64>();
            let sd = (2.0 * frob2 / probes).sqrt();
            assert!((e - exact).abs() <= 4.0 * sd, "{e} vs {exact} (sd {sd})");
        }
    }

    #[test]
    fn gcv_picks_smallest_alpha_on_exact_plane() {
        let uv = sites(200, 8);
        let w: Vec<f64> = uv.iter().map(|p| 0.5 * p[0] - p[1]).collect();
        let grid = log_alpha_grid(1e-6, 1e6, 13).unwrap();
        let sel = gcv_select_alpha(&cloud(&uv, &w), &grid).unwrap();
        assert_eq!(sel.alpha, grid[0]);
    }

    #[test]
    fn gcv_minimum_and_noise_reduction() {
        let m = 400;
        let uv = sites(m, 9);
        let sigma = 0.05;
        let truth: Vec<f64> = uv.iter().map(|p| 0.2 * p[0] + 0.1 * p[1]).collect();
        let w: Vec<f64> = truth.iter().zip(noise(m, sigma, 10)).map(|(t, e)| t + e).collect();
        let s = D2Smoother::new(&uv, 1500).unwrap();
        let grid = log_alpha_grid(1e-6, 1e6, 13).unwrap();
        let (sel, points, fields) = s.gcv(&w, &grid, TraceEstimator::Exact, 0, 0).unwrap();
        let best = points.iter().find(|p| p.alpha == sel.alpha).unwrap().score;
        assert!(best <= points.first().unwrap().score && best <= points.last().unwrap().score);
        assert!(points.iter().all(|p| best <= p.score));
        let f = fields.iter().find(|f| f.alpha == sel.alpha).unwrap();
        let fit = s.fitted_values(f);
        assert!(rms(&fit, &truth) <= 1.5 * sigma);
    }

    #[test]
    fn noisy_paraboloid_is_denoised() {
        let m = 600;
        let uv = sites(m, 11);
        let sigma = 0.01;
        let truth: Vec<f64> = uv.iter().map(|p| (p[0] * p[0] + p[1] * p[1]) / 4.0).collect();
        let w: Vec<f64> = truth.iter().zip(noise(m, sigma, 12)).map(|(t, e)| t + e).collect();
        let c = cloud(&uv, &w);
        let cfg = D2Config { mesh_res: 20, ..D2Config::default() };
        let rec = reconstruct_d2s(&c, &cfg).unwrap();
        let s = D2Smoother::new(&uv, 1500).unwrap();
        assert!(rms(&s.fitted_values(&rec.field), &truth) < sigma);
        assert!(rec.selection.is_some());
    }

    #[test]
    fn fps_deduplicates_sites() {
        let mut uv = sites(50, 13);
        uv.extend(uv.clone());
        let s = D2Smoother::new(&uv, 1500).unwrap();
        assert_eq!(s.n_centers(), 50);
        let s = D2Smoother::new(&uv, 20).unwrap();
        assert_eq!(s.n_centers(), 20);
    }

    /// Grid over the unit square including its border.
    fn grid_cloud(n: usize, f: impl Fn(f64, f64) -> f64) -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let (u, v) = (i as f64 / (n - 1) as f64, j as f64 / (n - 1) as f64);
                pts.push(Point3::new(u, v, f(u, v)));
            }
        }
        PointCloud::new(pts).unwrap()
    }

    /// Composite Simpson area of `z = (x^2 + y^2) / 4` over the unit square.
    fn paraboloid_area_oracle() -> f64 {
        let n = 400;
        let h = 1.0 / n as f64;
        let wt = |k: usize| if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        let mut s = 0.0;
        for i in 0..=n {
            for j in 0..=n {
                let (x, y) = (i as f64 * h, j as f64 * h);
                s += wt(i) * wt(j) * (1.0 + x * x / 4.0 + y * y / 4.0).sqrt();
            }
        }
        s * h * h / 9.0
    }

    #[test]
    fn mesh_areas() {
        let flat = grid_cloud(15, |_, _| 0.25);
        let rec = reconstruct_d2s(&flat, &D2Config { mesh_res: 40, ..D2Config::default() }).unwrap();
        assert!((rec.mesh.area() - 1.0).abs() <= 0.01, "{}", rec.mesh.area());

        let para = grid_cloud(20, |x, y| (x * x + y * y) / 4.0);
        let oracle = paraboloid_area_oracle();
        let field = fit_d2_spline(&para, 1e-6).unwrap();
        let coarse = height_field_to_mesh(&field, &para, 50).unwrap().area();
        let fine = height_field_to_mesh(&field, &para, 100).unwrap().area();
        assert!((fine - oracle).abs() <= 0.02 * oracle, "{fine} vs {oracle}");
        assert!((fine - coarse).abs() <= 0.005 * fine);
    }
}
