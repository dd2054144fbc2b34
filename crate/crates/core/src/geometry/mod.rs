//! Point-cloud and mesh data model, file I/O, preprocessing and area measurement.

mod io;
pub(crate) mod mesh;
mod normals;
pub(crate) mod preprocess;
pub mod spatial;

use nalgebra::{Matrix3, Point3, Vector3};

use crate::error::{Error, Result};

pub use io::{
    load_cloud, load_cloud_with_normals, load_mesh, save_cloud, save_mesh, CloudFormat, MeshFormat,
};
pub use mesh::{mesh_area, TriangleMesh};
pub use normals::{estimate_normals, estimate_normals_with, NormalOrientation};
pub use preprocess::{align_bounding_rect, pca_align, remove_statistical_outliers, statistical_inliers};

/// Raw 3D samples of a single leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3<f64>>,
    pub id: String,
}

impl PointCloud {
    /// Builds a cloud, rejecting empty input and non-finite coordinates.
    pub fn new(points: Vec<Point3<f64>>) -> Result<Self> {
        Self::with_id(points, String::new())
    }

    pub fn with_id(points: Vec<Point3<f64>>, id: impl Into<String>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("point cloud has no points".into()));
        }
        if let Some(i) = points.iter().position(|p| !is_finite(p)) {
            return Err(Error::Parameter(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self {
            points,
            id: id.into(),
        })
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point3<f64>> {
        self.points
    }

    /// Cloud restricted to the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<PointCloud> {
        PointCloud::with_id(
            indices.iter().map(|&i| self.points[i]).collect(),
            self.id.clone(),
        )
    }

    /// `(u, v)` coordinates of every point, i.e. the projection onto the xy plane.
    pub fn uv(&self) -> Vec<[f64; 2]> {
        self.points.iter().map(|p| [p.x, p.y]).collect()
    }

    pub fn bounding_box(&self) -> (Point3<f64>, Point3<f64>) {
        bounding_box(&self.points)
    }

    pub fn centroid(&self) -> Point3<f64> {
        let sum = self
            .points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Point3::from(sum / self.points.len() as f64)
    }
}

/// Points paired with unit surface normals.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientedPointCloud {
    points: Vec<Point3<f64>>,
    normals: Vec<Vector3<f64>>,
    pub id: String,
}

impl OrientedPointCloud {
    pub const NORMAL_TOLERANCE: f64 = 1e-6;

    pub fn new(points: Vec<Point3<f64>>, normals: Vec<Vector3<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("oriented cloud has no points".into()));
        }
        if points.len() != normals.len() {
            return Err(Error::Parameter(format!(
                "{} points but {} normals",
                points.len(),
                normals.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !is_finite(p)) {
            return Err(Error::Parameter(format!("point {i} has a non-finite coordinate")));
        }
        if let Some(i) = normals
            .iter()
            .position(|n| !((n.norm() - 1.0).abs() <= Self::NORMAL_TOLERANCE))
        {
            return Err(Error::Parameter(format!("normal {i} is not unit length")));
        }
        Ok(Self {
            points,
            normals,
            id: String::new(),
        })
    }

    /// Like [`OrientedPointCloud::new`] but normalizes the normals first.
    pub fn normalizing(points: Vec<Point3<f64>>, normals: Vec<Vector3<f64>>) -> Result<Self> {
        let normals = normals
            .into_iter()
            .enumerate()
            .map(|(i, n)| {
                let len = n.norm();
                if len > 0.0 && len.is_finite() {
                    Ok(n / len)
                } else {
                    Err(Error::Parameter(format!("normal {i} has zero length")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(points, normals)
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn normals(&self) -> &[Vector3<f64>] {
        &self.normals
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_cloud(&self) -> PointCloud {
        PointCloud {
            points: self.points.clone(),
            id: self.id.clone(),
        }
    }
}

/// Rigid frame produced by PCA alignment: `local = rotation * (world - centroid)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub rotation: Matrix3<f64>,
    pub centroid: Point3<f64>,
}

impl Frame {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            centroid: Point3::origin(),
        }
    }

    pub fn to_local(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * (p - self.centroid))
    }

    pub fn to_world(&self, p: &Point3<f64>) -> Point3<f64> {
        self.centroid + self.rotation.transpose() * p.coords
    }

    /// Third row of the rotation: the leaf-plane normal in world coordinates.
    pub fn normal_axis(&self) -> Vector3<f64> {
        self.rotation.row(2).transpose()
    }
}

pub(crate) fn is_finite(p: &Point3<f64>) -> bool {
    p.x.is_finite() && p.y.is_finite() && p.z.is_finite()
}

pub(crate) fn bounding_box(points: &[Point3<f64>]) -> (Point3<f64>, Point3<f64>) {
    let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

/// Mean distance from each point to its nearest other point.
pub fn mean_nearest_neighbor_distance(points: &[Point3<f64>]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Parameter(
            "nearest-neighbor distance needs at least two points".into(),
        ));
    }
    let tree = spatial::KdTree::new(points.iter().map(|p| [p.x, p.y, p.z]).collect());
    let total: f64 = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let nn = tree.nearest_k(&[p.x, p.y, p.z], 2);
            nn.iter()
                .find(|n| n.index != i)
                .map(|n| n.dist_sq.sqrt())
                .unwrap_or(0.0)
        })
        .sum();
    Ok(total / points.len() as f64)
}
