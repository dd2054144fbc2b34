use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};

use super::spatial::KdTree;
use super::{Frame, PointCloud};
use crate::error::{Error, Result};

/// Mean distance from each point to its `k` nearest other points.
pub(crate) fn mean_knn_distances(points: &[Point3<f64>], k: usize) -> Vec<f64> {
    let tree = KdTree::new(points.iter().map(|p| [p.x, p.y, p.z]).collect());
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let nn = tree.nearest_k(&[p.x, p.y, p.z], k + 1);
            let others = nn.iter().filter(|n| n.index != i).take(k);
            others.map(|n| n.dist_sq.sqrt()).sum::<f64>() / k as f64
        })
        .collect()
}

/// Indices of points whose mean k-NN distance is within `std_ratio` standard
/// deviations of the global mean.
pub fn statistical_inliers(cloud: &PointCloud, k: usize, std_ratio: f64) -> Result<Vec<usize>> {
    if k == 0 || k >= cloud.len() {
        return Err(Error::Parameter(format!(
            "outlier removal needs 1 <= k < point count ({}), got k = {k}",
            cloud.len()
        )));
    }
    if !(std_ratio >= 0.0) {
        return Err(Error::Parameter(format!("std_ratio must be >= 0, got {std_ratio}")));
    }
    let d = mean_knn_distances(cloud.points(), k);
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    // Round-off slack so perfectly regular inputs never lose points.
    let threshold = mean + std_ratio * var.sqrt() + 1e-12 * mean;
    Ok((0..d.len()).filter(|&i| d[i] <= threshold).collect())
}

/// Drops points whose mean k-NN distance exceeds `mean + std_ratio * std`.
pub fn remove_statistical_outliers(cloud: &PointCloud, k: usize, std_ratio: f64) -> Result<PointCloud> {
    let keep = statistical_inliers(cloud, k, std_ratio)?;
    cloud.select(&keep)
}

/// Eigen-decomposition of the covariance: variances in descending order and the
/// matching unit axes.
pub(crate) fn principal_axes(points: &[Point3<f64>], centroid: &Point3<f64>) -> ([f64; 3], [Vector3<f64>; 3]) {
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= points.len() as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.map(|i| eig.eigenvalues[i].max(0.0));
    let axes = order.map(|i| eig.eigenvectors.column(i).into_owned());
    (vals, axes)
}

fn orient_by_skewness(points: &[Point3<f64>], centroid: &Point3<f64>, axis: Vector3<f64>, var: f64) -> Vector3<f64> {
    let third: f64 = points
        .iter()
        .map(|p| (p - centroid).dot(&axis).powi(3))
        .sum::<f64>()
        / points.len() as f64;
    if third.abs() > 1e-9 * var.powf(1.5) {
        return if third < 0.0 { -axis } else { axis };
    }
    // Symmetric distribution: make the dominant component positive instead.
    let k = axis.iamax();
    if axis[k] < 0.0 {
        -axis
    } else {
        axis
    }
}

/// Rotates the cloud into its principal frame: x along the largest variance,
/// z along the smallest. The x and z axes are signed so their skewness is
/// non-negative; y completes a right-handed frame.
pub fn pca_align(cloud: &PointCloud) -> Result<(PointCloud, Frame)> {
    let frame = pca_frame(cloud.points())?;
    let aligned = cloud.points().iter().map(|p| frame.to_local(p)).collect();
    Ok((PointCloud::with_id(aligned, cloud.id.clone())?, frame))
}

pub(crate) fn pca_frame(points: &[Point3<f64>]) -> Result<Frame> {
    if points.len() < 3 {
        return Err(Error::Degenerate("PCA alignment needs at least 3 points".into()));
    }
    let centroid = Point3::from(
        points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / points.len() as f64,
    );
    let (vals, axes) = principal_axes(points, &centroid);
    if vals[0] <= f64::MIN_POSITIVE || vals[1] <= 1e-12 * vals[0] {
        return Err(Error::Degenerate("points are collinear or coincident".into()));
    }
    let e1 = orient_by_skewness(points, &centroid, axes[0], vals[0]);
    let e3 = orient_by_skewness(points, &centroid, axes[2], vals[2].max(1e-30 * vals[0]));
    let e2 = e3.cross(&e1).normalize();
    let rotation = Matrix3::from_rows(&[e1.transpose(), e2.transpose(), e3.transpose()]);
    Ok(Frame { rotation, centroid })
}

/// Rotates an aligned cloud about its z axis so that the minimum-area
/// rectangle enclosing its uv projection is axis-aligned. The returned frame
/// composes the extra rotation with `frame`.
pub fn align_bounding_rect(cloud: &PointCloud, frame: &Frame) -> Result<(PointCloud, Frame)> {
    let hull = convex_hull(&cloud.uv());
    if hull.len() < 3 {
        return Err(Error::Degenerate("uv projection has no area".into()));
    }
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..hull.len() {
        let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
        let theta = (b[1] - a[1]).atan2(b[0] - a[0]);
        let (s, c) = theta.sin_cos();
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &hull {
            let q = [c * p[0] + s * p[1], -s * p[0] + c * p[1]];
            for k in 0..2 {
                lo[k] = lo[k].min(q[k]);
                hi[k] = hi[k].max(q[k]);
            }
        }
        let area = (hi[0] - lo[0]) * (hi[1] - lo[1]);
        if area < best.0 - 1e-12 * area.abs() {
            best = (area, theta);
        }
    }
    // Keep the longer side along x.
    let (s, c) = best.1.sin_cos();
    let mut rz = Matrix3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0);
    let rotated: Vec<Point3<f64>> = cloud.points().iter().map(|p| Point3::from(rz * p.coords)).collect();
    let (lo, hi) = super::bounding_box(&rotated);
    if hi.y - lo.y > hi.x - lo.x {
        rz = Matrix3::new(0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0) * rz;
    }
    let points = cloud.points().iter().map(|p| Point3::from(rz * p.coords)).collect();
    let out = Frame {
        rotation: rz * frame.rotation,
        centroid: frame.centroid,
    };
    Ok((PointCloud::with_id(points, cloud.id.clone())?, out))
}

/// Counter-clockwise convex hull (monotone chain), collinear points dropped.
pub(crate) fn convex_hull(pts: &[[f64; 2]]) -> Vec<[f64; 2]> {
    use crate::local::delaunay::orient;
    let mut sorted = pts.to_vec();
    sorted.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    sorted.dedup();
    if sorted.len() < 3 {
        return sorted;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * sorted.len());
    for pass in 0..2 {
        let start = hull.len();
        for i in 0..sorted.len() {
            let p = if pass == 0 { sorted[i] } else { sorted[sorted.len() - 1 - i] };
            while hull.len() >= start + 2 && orient(&hull[hull.len() - 2], &hull[hull.len() - 1], &p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}
