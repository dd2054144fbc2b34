//! Tensor-product B-spline interpolation and rational (NURBS) least-squares
//! approximation over a resampled parametric grid, with trim curves that
//! restrict area integration to the leaf outline.

pub mod basis;
pub mod fit;
pub mod surface;
pub mod trim;

use log::warn;
use nalgebra::Point3;
use serde::{Deserialize, Serialize};

pub use basis::{bspline_basis, KnotVector};
pub use fit::{
    chord_length_parameterize, fit_bspline_approx, fit_bspline_interp, fit_nurbs_approx, resample_to_grid,
    GridSamples,
};
pub use surface::ParametricSurface;
pub use trim::{fit_trim_curve, fit_trim_curve_with, trimmed_area, TrimCurve, TrimOptions};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, TriangleMesh};

/// Which spline area the benchmark reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AreaMode {
    #[default]
    Trimmed,
    Untrimmed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplineConfig {
    pub degree_u: usize,
    pub degree_v: usize,
    pub grid_u: usize,
    pub grid_v: usize,
    pub ctrl_u: usize,
    pub ctrl_v: usize,
    pub quadrature_res: usize,
    /// Per-axis cell count of the output mesh.
    pub mesh_res: usize,
    pub area_mode: AreaMode,
}

impl Default for SplineConfig {
    fn default() -> Self {
        Self {
            degree_u: 3,
            degree_v: 3,
            grid_u: 40,
            grid_v: 40,
            ctrl_u: 20,
            ctrl_v: 20,
            quadrature_res: 256,
            mesh_res: 100,
            area_mode: AreaMode::Trimmed,
        }
    }
}

/// Output of the spline pipelines.
#[derive(Debug, Clone)]
pub struct SplineReconstruction {
    pub surface: ParametricSurface,
    /// Trim curve in surface parameter space, when boundary extraction succeeded.
    pub trim: Option<TrimCurve>,
    pub area_trimmed: Option<f64>,
    pub area_untrimmed: f64,
    pub mesh: TriangleMesh,
}

impl SplineReconstruction {
    /// Area selected by `mode`, falling back to the untrimmed value.
    pub fn area(&self, mode: AreaMode) -> f64 {
        match mode {
            AreaMode::Trimmed => self.area_trimmed.unwrap_or(self.area_untrimmed),
            AreaMode::Untrimmed => self.area_untrimmed,
        }
    }
}

/// Interpolating cubic B-spline through a resampled grid of an aligned cloud.
pub fn reconstruct_bspline(cloud: &PointCloud, cfg: &SplineConfig) -> Result<SplineReconstruction> {
    let grid = resample_to_grid(cloud, cfg.grid_u, cfg.grid_v)?;
    let surface = fit_bspline_interp(&grid, cfg.degree_u, cfg.degree_v)?;
    finish(cloud, &grid, surface, cfg)
}

/// NURBS least-squares approximation with unit weights.
pub fn reconstruct_nurbs(cloud: &PointCloud, cfg: &SplineConfig) -> Result<SplineReconstruction> {
    let grid = resample_to_grid(cloud, cfg.grid_u, cfg.grid_v)?;
    let weights = vec![1.0; cfg.ctrl_u * cfg.ctrl_v];
    let surface = fit_nurbs_approx(&grid, cfg.degree_u, cfg.degree_v, cfg.ctrl_u, cfg.ctrl_v, &weights)?;
    finish(cloud, &grid, surface, cfg)
}

fn finish(
    cloud: &PointCloud,
    grid: &GridSamples,
    surface: ParametricSurface,
    cfg: &SplineConfig,
) -> Result<SplineReconstruction> {
    let trim = match fit_trim_curve(cloud).and_then(|t| to_parameter_space(&t, grid)) {
        Ok(t) => Some(t),
        Err(e) => {
            warn!("trim curve unavailable, using the full parameter domain: {e}");
            None
        }
    };
    let area_untrimmed = trimmed_area(&surface, None, cfg.quadrature_res)?;
    let area_trimmed = match &trim {
        Some(t) => Some(trimmed_area(&surface, Some(t), cfg.quadrature_res)?),
        None => None,
    };
    let mesh = surface_mesh(&surface, trim.as_ref(), cfg.mesh_res)?;
    Ok(SplineReconstruction {
        surface,
        trim,
        area_trimmed,
        area_untrimmed,
        mesh,
    })
}

/// Piecewise-linear map from uv node coordinates to grid parameters.
fn to_parameter_space(trim: &TrimCurve, grid: &GridSamples) -> Result<TrimCurve> {
    let xs: Vec<f64> = (0..grid.n_u).map(|k| grid.point(k, 0).x).collect();
    let ys: Vec<f64> = (0..grid.n_v).map(|l| grid.point(0, l).y).collect();
    trim.map(|p| [interp(&xs, &grid.u_params, p[0]), interp(&ys, &grid.v_params, p[1])])
}

fn interp(xs: &[f64], ts: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ts[0];
    }
    if x >= xs[n - 1] {
        return ts[n - 1];
    }
    let k = xs.partition_point(|&v| v <= x).clamp(1, n - 1);
    let s = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
    ts[k - 1] + s * (ts[k] - ts[k - 1])
}

/// Triangulated `res x res` sampling of the surface, keeping cells whose
/// centers fall inside the trim curve.
pub fn surface_mesh(surface: &ParametricSurface, trim: Option<&TrimCurve>, res: usize) -> Result<TriangleMesh> {
    let ((u0, u1), (v0, v1)) = surface.domain();
    grid_mesh(res, [u0, v0], [u1, v1], |u, v| trim.is_none_or(|t| t.contains(&[u, v])), |u, v| {
        surface.evaluate(u, v)
    })
}

/// Regular-grid triangulation over `[lo, hi]` with `res` cells per axis.
/// Cells are kept when `keep` accepts their center.
pub(crate) fn grid_mesh(
    res: usize,
    lo: [f64; 2],
    hi: [f64; 2],
    keep: impl Fn(f64, f64) -> bool,
    eval: impl Fn(f64, f64) -> Result<Point3<f64>>,
) -> Result<TriangleMesh> {
    if res == 0 {
        return Err(Error::Parameter("mesh resolution must be positive".into()));
    }
    let (du, dv) = ((hi[0] - lo[0]) / res as f64, (hi[1] - lo[1]) / res as f64);
    let coord = |a: usize, b: usize| {
        let u = if a == res { hi[0] } else { lo[0] + a as f64 * du };
        let v = if b == res { hi[1] } else { lo[1] + b as f64 * dv };
        (u, v)
    };
    let nodes = res + 1;
    let mut index = vec![usize::MAX; nodes * nodes];
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for a in 0..res {
        for b in 0..res {
            let (uc, vc) = (lo[0] + (a as f64 + 0.5) * du, lo[1] + (b as f64 + 0.5) * dv);
            if !keep(uc, vc) {
                continue;
            }
            let mut corner = [0usize; 4];
            for (c, (da, db)) in [(0, 0), (1, 0), (1, 1), (0, 1)].into_iter().enumerate() {
                let id = (a + da) * nodes + b + db;
                if index[id] == usize::MAX {
                    let (u, v) = coord(a + da, b + db);
                    index[id] = vertices.len();
                    vertices.push(eval(u, v)?);
                }
                corner[c] = index[id];
            }
            triangles.push([corner[0], corner[1], corner[2]]);
            triangles.push([corner[0], corner[2], corner[3]]);
        }
    }
    if triangles.is_empty() {
        return Err(Error::Degenerate("no mesh cell lies inside the trimmed domain".into()));
    }
    TriangleMesh::new(vertices, triangles)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane_cloud(n: usize, side: f64) -> PointCloud {
        let pts = (0..n * n)
            .map(|i| {
                let (k, l) = (i / n, i % n);
                Point3::new(k as f64 / (n - 1) as f64 * side, l as f64 / (n - 1) as f64 * side, 0.0)
            })
            .collect();
        PointCloud::new(pts).unwrap()
    }

    #[test]
    fn plane_areas() {
        let cloud = plane_cloud(60, 2.0);
        for rec in [
            reconstruct_bspline(&cloud, &SplineConfig::default()).unwrap(),
            reconstruct_nurbs(&cloud, &SplineConfig::default()).unwrap(),
        ] {
            assert!((rec.area_untrimmed - 4.0).abs() < 1e-6);
            let trimmed = rec.area_trimmed.unwrap();
            assert!((trimmed - 4.0).abs() < 0.04, "{trimmed}");
            assert!((rec.mesh.area() - 4.0).abs() < 0.08);
        }
    }

    #[test]
    fn interp_clamps_and_lerps() {
        let xs = [0.0, 1.0, 3.0];
        let ts = [0.0, 0.5, 1.0];
        assert_eq!(interp(&xs, &ts, -1.0), 0.0);
        assert_eq!(interp(&xs, &ts, 2.0), 0.75);
        assert_eq!(interp(&xs, &ts, 5.0), 1.0);
    }
}
