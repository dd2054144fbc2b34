//! Weighted local polynomial regression of height over the uv plane, and the
//! Delaunay 2.5D, MLS and LOESS reconstructions built on it.

use log::warn;
use nalgebra::{DMatrix, DVector, Point3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::delaunay::delaunay_2d;
use super::kernels::{gaussian_weight, tricube_weight};
use crate::error::{Error, Result};
use crate::geometry::spatial::{KdTree, Neighbor};
use crate::geometry::{PointCloud, TriangleMesh};

/// Distance weighting used by [`LocalFitter`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// `exp(-d^2 / h^2)`; moving least squares.
    Gaussian { h: f64 },
    /// `(1 - (d / d_max)^3)^3` with `d_max` the farthest selected neighbor; LOESS.
    Tricube,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Neighborhood {
    Knn(usize),
    Radius(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFitConfig {
    pub kernel: Kernel,
    pub neighborhood: Neighborhood,
    /// Total polynomial degree, 0 to 2.
    pub degree: usize,
    /// Neighborhoods smaller than this are grown to the nearest `min_neighbors`.
    pub min_neighbors: usize,
}

/// Parameters of the MLS and LOESS pipelines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalConfig {
    /// MLS bandwidth as a multiple of the mean uv nearest-neighbor distance.
    pub bandwidth_mult: f64,
    pub mls_degree: usize,
    /// LOESS span as a fraction of the point count.
    pub span_frac: f64,
    pub loess_degree: usize,
    pub knn_min: usize,
}

impl Default for LocalConfig {
    fn default() -> Self {
        Self {
            bandwidth_mult: 2.0,
            mls_degree: 2,
            span_frac: 0.05,
            loess_degree: 2,
            knn_min: 30,
        }
    }
}

/// Fitted height and the polynomial degree actually used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalEstimate {
    pub height: f64,
    pub degree: usize,
}

/// Reusable neighbor index over the uv coordinates of a cloud.
#[derive(Debug, Clone)]
pub struct LocalFitter {
    tree: KdTree<2>,
    heights: Vec<f64>,
    cfg: LocalFitConfig,
}

impl LocalFitter {
    pub fn new(cloud: &PointCloud, cfg: LocalFitConfig) -> Result<Self> {
        if cfg.degree > 2 {
            return Err(Error::Parameter(format!("local degree must be 0, 1 or 2, got {}", cfg.degree)));
        }
        match cfg.kernel {
            Kernel::Gaussian { h } if !(h > 0.0) || !h.is_finite() => {
                return Err(Error::Parameter(format!("bandwidth must be positive, got {h}")))
            }
            _ => {}
        }
        match cfg.neighborhood {
            Neighborhood::Knn(0) => return Err(Error::Parameter("neighbor count must be positive".into())),
            Neighborhood::Radius(r) if !(r > 0.0) => {
                return Err(Error::Parameter(format!("neighborhood radius must be positive, got {r}")))
            }
            _ => {}
        }
        Ok(Self {
            tree: KdTree::new(cloud.uv()),
            heights: cloud.points().iter().map(|p| p.z).collect(),
            cfg,
        })
    }

    fn neighbors(&self, q: &[f64; 2]) -> Vec<Neighbor> {
        let n = self.tree.len();
        let min = self.cfg.min_neighbors.clamp(1, n);
        match self.cfg.neighborhood {
            Neighborhood::Knn(k) => self.tree.nearest_k(q, k.max(min).min(n)),
            Neighborhood::Radius(r) => {
                let found = self.tree.within_radius(q, r);
                if found.len() >= min {
                    found
                } else {
                    self.tree.nearest_k(q, min)
                }
            }
        }
    }

    /// Weighted least-squares polynomial evaluated at `q`. Rank-deficient
    /// neighborhoods fall back to lower degrees.
    pub fn fit(&self, q: &[f64; 2]) -> Result<LocalEstimate> {
        let nb = self.neighbors(q);
        let d_max = nb.iter().map(|n| n.dist_sq).fold(0.0, f64::max).sqrt();
        let weights: Vec<f64> = match self.cfg.kernel {
            Kernel::Gaussian { h } => nb
                .iter()
                .map(|n| gaussian_weight(n.dist_sq.sqrt(), h))
                .collect::<Result<_>>()?,
            Kernel::Tricube if d_max > 0.0 => nb.iter().map(|n| tricube_weight(n.dist_sq.sqrt() / d_max)).collect(),
            Kernel::Tricube => vec![1.0; nb.len()],
        };
        let scale = if d_max > 0.0 { d_max } else { 1.0 };
        for degree in (0..=self.cfg.degree).rev() {
            if let Some(height) = self.solve(q, &nb, &weights, scale, degree) {
                return Ok(LocalEstimate { height, degree });
            }
        }
        Err(Error::Numerical(format!(
            "local fit at ({}, {}) has no positively weighted neighbor",
            q[0], q[1]
        )))
    }

    fn solve(&self, q: &[f64; 2], nb: &[Neighbor], weights: &[f64], scale: f64, degree: usize) -> Option<f64> {
        let m = [1, 3, 6][degree];
        let mut a = DMatrix::<f64>::zeros(m, m);
        let mut b = DVector::<f64>::zeros(m);
        for (n, &w) in nb.iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            let p = self.tree.point(n.index);
            let (x, y) = ((p[0] - q[0]) / scale, (p[1] - q[1]) / scale);
            let phi = [1.0, x, y, x * x, x * y, y * y];
            let z = self.heights[n.index];
            for r in 0..m {
                b[r] += w * phi[r] * z;
                for c in 0..=r {
                    a[(r, c)] += w * phi[r] * phi[c];
                }
            }
        }
        a.fill_upper_triangle_with_lower_triangle();
        let eig = SymmetricEigen::new(a);
        let max = eig.eigenvalues.max();
        if !(max > 0.0) || eig.eigenvalues.min() <= 1e-12 * max {
            return None;
        }
        // The query is the origin of the local basis, so only the constant
        // coefficient is needed: e_0^T V diag(1/lambda) V^T b.
        let v = &eig.eigenvectors;
        let proj = v.tr_mul(&b);
        let c0: f64 = (0..m).map(|k| v[(0, k)] * proj[k] / eig.eigenvalues[k]).sum();
        c0.is_finite().then_some(c0)
    }
}

/// One-off local fit at `query`; builds the neighbor index on every call.
pub fn local_poly_fit(cloud: &PointCloud, query: &[f64; 2], cfg: &LocalFitConfig) -> Result<f64> {
    let est = LocalFitter::new(cloud, *cfg)?.fit(query)?;
    if est.degree < cfg.degree {
        warn!("local fit degree lowered from {} to {}", cfg.degree, est.degree);
    }
    Ok(est.height)
}

/// Mean distance from each uv site to its nearest other site.
pub fn mean_uv_spacing(cloud: &PointCloud) -> Result<f64> {
    let uv = cloud.uv();
    if uv.len() < 2 {
        return Err(Error::Parameter("spacing needs at least two points".into()));
    }
    let tree = KdTree::new(uv.clone());
    let total: f64 = uv
        .iter()
        .enumerate()
        .map(|(i, p)| {
            tree.nearest_k(p, 2)
                .iter()
                .find(|n| n.index != i)
                .map_or(0.0, |n| n.dist_sq.sqrt())
        })
        .sum();
    Ok(total / uv.len() as f64)
}

impl LocalConfig {
    pub fn mls(&self, cloud: &PointCloud) -> Result<LocalFitConfig> {
        let h = self.bandwidth_mult * mean_uv_spacing(cloud)?;
        if !(h > 0.0) {
            return Err(Error::Degenerate("MLS bandwidth is zero; all uv sites coincide".into()));
        }
        Ok(LocalFitConfig {
            kernel: Kernel::Gaussian { h },
            neighborhood: Neighborhood::Radius(3.0 * h),
            degree: self.mls_degree,
            min_neighbors: self.knn_min,
        })
    }

    pub fn loess(&self, cloud: &PointCloud) -> Result<LocalFitConfig> {
        if !(self.span_frac > 0.0 && self.span_frac <= 1.0) {
            return Err(Error::Parameter(format!("LOESS span must be in (0, 1], got {}", self.span_frac)));
        }
        let k = (self.span_frac * cloud.len() as f64).ceil() as usize;
        Ok(LocalFitConfig {
            kernel: Kernel::Tricube,
            neighborhood: Neighborhood::Knn(k),
            degree: self.loess_degree,
            min_neighbors: self.knn_min,
        })
    }
}

/// Fitted height at every site of `cloud`.
pub fn smooth_heights(cloud: &PointCloud, cfg: &LocalFitConfig) -> Result<Vec<f64>> {
    let fitter = LocalFitter::new(cloud, *cfg)?;
    let mut lowered = 0usize;
    let heights = cloud
        .uv()
        .iter()
        .map(|q| {
            let est = fitter.fit(q)?;
            lowered += usize::from(est.degree < cfg.degree);
            Ok(est.height)
        })
        .collect::<Result<Vec<_>>>()?;
    if lowered > 0 {
        warn!("local fit degree lowered at {lowered} of {} sites", heights.len());
    }
    Ok(heights)
}

fn uv_mesh(cloud: &PointCloud, heights: &[f64]) -> Result<TriangleMesh> {
    let tri = delaunay_2d(&cloud.uv())?;
    let vertices = cloud
        .points()
        .iter()
        .zip(heights)
        .map(|(p, &h)| Point3::new(p.x, p.y, h))
        .collect();
    TriangleMesh::new(vertices, tri.triangles)
}

/// Delaunay triangulation of the uv projection, lifted back to the original heights.
pub fn reconstruct_delaunay25d(cloud: &PointCloud) -> Result<TriangleMesh> {
    let heights: Vec<f64> = cloud.points().iter().map(|p| p.z).collect();
    uv_mesh(cloud, &heights)
}

pub fn reconstruct_mls(cloud: &PointCloud, cfg: &LocalConfig) -> Result<TriangleMesh> {
    let heights = smooth_heights(cloud, &cfg.mls(cloud)?)?;
    uv_mesh(cloud, &heights)
}

pub fn reconstruct_loess(cloud: &PointCloud, cfg: &LocalConfig) -> Result<TriangleMesh> {
    let heights = smooth_heights(cloud, &cfg.loess(cloud)?)?;
    uv_mesh(cloud, &heights)
}
