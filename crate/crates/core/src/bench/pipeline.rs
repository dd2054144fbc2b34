//! Per-leaf pipeline: denoise, align, method-specific preparation,
//! reconstruction and area.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::config::{BenchConfig, PreprocessConfig};
use super::resources::{PhaseMeter, PhaseUsage, RamSource};
use super::MethodId;
use crate::d2spline::reconstruct_d2s;
use crate::error::{Error, Result};
use crate::geometry::{
    align_bounding_rect, estimate_normals_with, pca_align, save_mesh, statistical_inliers, CloudFormat, Frame,
    MeshFormat, OrientedPointCloud, PointCloud, TriangleMesh,
};
use crate::implicit::{reconstruct_bpa, reconstruct_poisson};
use crate::local::{reconstruct_delaunay25d, reconstruct_loess, reconstruct_mls};
use crate::som::reconstruct_som;
use crate::spline::{reconstruct_bspline, reconstruct_nurbs};

/// A cloud as read from disk, with normals when the file carries them.
#[derive(Debug, Clone)]
pub struct LeafInput {
    pub cloud: PointCloud,
    pub normals: Option<Vec<Vector3<f64>>>,
}

impl LeafInput {
    pub fn new(cloud: PointCloud) -> Self {
        Self { cloud, normals: None }
    }

    pub fn with_normals(cloud: PointCloud, normals: Vec<Vector3<f64>>) -> Result<Self> {
        if normals.len() != cloud.len() {
            return Err(Error::Parameter("normal count differs from point count".into()));
        }
        Ok(Self { cloud, normals: Some(normals) })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (cloud, normals) = crate::geometry::load_cloud_with_normals(path, CloudFormat::from_path(path))?;
        Ok(Self { cloud, normals })
    }
}

/// Output of the shared preprocessing, in the aligned frame.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub cloud: PointCloud,
    pub normals: Option<Vec<Vector3<f64>>>,
    /// Maps aligned coordinates back to the input frame.
    pub frame: Frame,
}

pub fn preprocess(input: &LeafInput, cfg: &PreprocessConfig) -> Result<Prepared> {
    let mut cloud = input.cloud.clone();
    let mut normals = input.normals.clone();
    if cfg.denoise && cloud.len() > cfg.outlier_k {
        let keep = statistical_inliers(&cloud, cfg.outlier_k, cfg.std_ratio)?;
        if keep.len() < cloud.len() {
            log::debug!("outlier removal dropped {} of {} points", cloud.len() - keep.len(), cloud.len());
            cloud = cloud.select(&keep)?;
            normals = normals.map(|n| keep.iter().map(|&i| n[i]).collect());
        }
    }
    let mut frame = Frame::identity();
    if cfg.align {
        let (aligned, f) = pca_align(&cloud)?;
        let (aligned, f) = align_bounding_rect(&aligned, &f)?;
        cloud = aligned;
        frame = f;
        normals = normals.map(|n| n.iter().map(|v| frame.rotation * v).collect());
    }
    Ok(Prepared { cloud, normals, frame })
}

/// Mesh in the aligned frame and the area reported for it.
#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub mesh: TriangleMesh,
    pub area: f64,
}

fn oriented(prep: &Prepared, cfg: &PreprocessConfig) -> Result<OrientedPointCloud> {
    match (&prep.normals, cfg.use_input_normals) {
        (Some(n), true) => OrientedPointCloud::normalizing(prep.cloud.points().to_vec(), n.clone()),
        _ => estimate_normals_with(&prep.cloud, cfg.normal_k, cfg.normal_orientation.into()),
    }
}

/// Method-specific preparation (normals for the oriented methods) and
/// reconstruction.
pub fn reconstruct(method: MethodId, prep: &Prepared, cfg: &BenchConfig) -> Result<MethodOutput> {
    let cloud = &prep.cloud;
    let out = match method {
        MethodId::Bspline => {
            let r = reconstruct_bspline(cloud, &cfg.spline)?;
            MethodOutput { area: r.area(cfg.spline.area_mode), mesh: r.mesh }
        }
        MethodId::Nurbs => {
            let r = reconstruct_nurbs(cloud, &cfg.spline)?;
            MethodOutput { area: r.area(cfg.spline.area_mode), mesh: r.mesh }
        }
        MethodId::D2s => {
            let r = reconstruct_d2s(cloud, &cfg.d2s)?;
            MethodOutput { area: r.mesh.area(), mesh: r.mesh }
        }
        MethodId::Delaunay => {
            let mesh = reconstruct_delaunay25d(cloud)?;
            MethodOutput { area: mesh.area(), mesh }
        }
        MethodId::Mls => {
            let mesh = reconstruct_mls(cloud, &cfg.local)?;
            MethodOutput { area: mesh.area(), mesh }
        }
        MethodId::Loess => {
            let mesh = reconstruct_loess(cloud, &cfg.local)?;
            MethodOutput { area: mesh.area(), mesh }
        }
        MethodId::Poisson => {
            let r = reconstruct_poisson(&oriented(prep, &cfg.preprocess)?, &cfg.poisson)?;
            MethodOutput { area: r.area, mesh: r.mesh }
        }
        MethodId::Bpa => {
            let r = reconstruct_bpa(&oriented(prep, &cfg.preprocess)?, &cfg.bpa)?;
            MethodOutput { area: r.mesh.area(), mesh: r.mesh }
        }
        MethodId::Som => {
            let r = reconstruct_som(cloud, &cfg.som)?;
            MethodOutput { area: r.mesh.area(), mesh: r.mesh }
        }
    };
    if !(out.area.is_finite() && out.area >= 0.0) {
        return Err(Error::Numerical(format!("{method} produced area {}", out.area)));
    }
    Ok(out)
}

/// Runs [`reconstruct`] between the two halves of a [`PhaseMeter`].
pub fn measure(method: MethodId, prep: &Prepared, cfg: &BenchConfig, prefer_allocator: bool) -> Result<(MethodOutput, PhaseUsage)> {
    let meter = PhaseMeter::start(prefer_allocator);
    let out = reconstruct(method, prep, cfg);
    let usage = meter.finish();
    out.map(|o| (o, usage))
}

/// Names a leaf within a benchmark run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeafId {
    pub dataset: String,
    pub plant: String,
    pub leaf: String,
}

impl LeafId {
    /// Splits a `<plant>__<leaf>` file stem; without the separator the whole
    /// stem is the leaf and the plant is empty.
    pub fn from_stem(dataset: &str, stem: &str) -> Self {
        let (plant, leaf) = stem.split_once("__").unwrap_or(("", stem));
        Self { dataset: dataset.into(), plant: plant.into(), leaf: leaf.into() }
    }
}

/// One (leaf, method) measurement. Failed runs keep `status` as an error
/// tag and leave every metric empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub leaf: LeafId,
    pub method: MethodId,
    pub n_points: Option<usize>,
    pub area: Option<f64>,
    pub cpu_s: Option<f64>,
    pub peak_ram_bytes: Option<u64>,
    pub ram_source: Option<RamSource>,
    pub status: String,
    pub message: Option<String>,
    pub mesh_path: Option<PathBuf>,
}

impl ReconstructionResult {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn failed(leaf: LeafId, method: MethodId, n_points: Option<usize>, err: &Error) -> Self {
        Self {
            leaf,
            method,
            n_points,
            area: None,
            cpu_s: None,
            peak_ram_bytes: None,
            ram_source: None,
            status: err.tag().to_string(),
            message: Some(err.to_string()),
            mesh_path: None,
        }
    }

    pub fn peak_ram_mb(&self) -> Option<f64> {
        self.peak_ram_bytes.map(|b| b as f64 / (1024.0 * 1024.0))
    }
}

/// Full pipeline in the calling process. The mesh, if requested, is written
/// in the input frame after measurement ends.
pub fn run_in_process(
    method: MethodId,
    leaf: LeafId,
    input: &LeafInput,
    cfg: &BenchConfig,
    mesh_out: Option<&Path>,
    prefer_allocator: bool,
) -> ReconstructionResult {
    let n_points = input.cloud.len();
    let run = || -> Result<ReconstructionResult> {
        let prep = preprocess(input, &cfg.preprocess)?;
        let (out, usage) = measure(method, &prep, cfg, prefer_allocator)?;
        if let Some(path) = mesh_out {
            save_mesh(&out.mesh.to_world(&prep.frame), path, MeshFormat::from_path(path)?)?;
        }
        Ok(ReconstructionResult {
            leaf: leaf.clone(),
            method,
            n_points: Some(n_points),
            area: Some(out.area),
            cpu_s: Some(usage.cpu_s),
            peak_ram_bytes: Some(usage.peak_ram_bytes),
            ram_source: Some(usage.ram_source),
            status: "ok".into(),
            message: None,
            mesh_path: mesh_out.map(Path::to_path_buf),
        })
    };
    run().unwrap_or_else(|e| {
        log::warn!("{method} on {}/{} failed: {e}", leaf.plant, leaf.leaf);
        ReconstructionResult::failed(leaf, method, Some(n_points), &e)
    })
}

/// Convenience form of [`run_in_process`] for an unnamed cloud.
pub fn run_method(method: MethodId, cloud: &PointCloud, cfg: &BenchConfig) -> ReconstructionResult {
    let leaf = LeafId { leaf: cloud.id.clone(), ..LeafId::default() };
    run_in_process(method, leaf, &LeafInput::new(cloud.clone()), cfg, None, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Point3, Rotation3};

    fn unit_square(m: usize) -> PointCloud {
        let h = 1.0 / (m - 1) as f64;
        let pts = (0..m * m).map(|i| Point3::new((i % m) as f64 * h, (i / m) as f64 * h, 0.0)).collect();
        PointCloud::new(pts).unwrap()
    }

    fn no_denoise() -> BenchConfig {
        let mut cfg = BenchConfig::default();
        cfg.preprocess.denoise = false;
        cfg
    }

    #[test]
    fn delaunay_on_unit_square() {
        // Outlier removal would trim the grid corners, whose k-NN distances
        // sit far above the mean on a noise-free lattice.
        let r = run_method(MethodId::Delaunay, &unit_square(30), &no_denoise());
        assert!(r.is_ok(), "{r:?}");
        assert!((r.area.unwrap() - 1.0).abs() < 1e-6);
        assert!(r.cpu_s.unwrap() >= 0.0);
    }

    #[test]
    fn preprocessing_rotates_normals_with_points() {
        let rot = Rotation3::from_euler_angles(0.3, -0.7, 1.1);
        let base = unit_square(20);
        let pts: Vec<_> = base.points().iter().map(|p| rot * Point3::new(p.x * 2.0, p.y, p.z)).collect();
        let normals = vec![rot * Vector3::z(); pts.len()];
        let input = LeafInput::with_normals(PointCloud::new(pts).unwrap(), normals).unwrap();
        let prep = preprocess(&input, &no_denoise().preprocess).unwrap();
        assert_eq!(prep.cloud.len(), 400);
        for n in prep.normals.unwrap() {
            assert!(n.z.abs() > 1.0 - 1e-9);
        }
        let (lo, hi) = prep.cloud.bounding_box();
        assert!((hi.x - lo.x - 2.0).abs() < 1e-9 && (hi.y - lo.y - 1.0).abs() < 1e-9);
    }

    #[test]
    fn failure_is_recorded_not_raised() {
        let pts = (0..50).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let r = run_method(MethodId::Delaunay, &PointCloud::new(pts).unwrap(), &BenchConfig::default());
        assert_eq!(r.status, "degenerate");
        assert!(r.area.is_none() && r.cpu_s.is_none() && r.peak_ram_bytes.is_none());
    }

    #[test]
    fn leaf_id_from_stem() {
        let id = LeafId::from_stem("d", "A512a__leaf03");
        assert_eq!((id.plant.as_str(), id.leaf.as_str()), ("A512a", "leaf03"));
        assert_eq!(LeafId::from_stem("d", "solo").plant, "");
    }
}
