//! Poisson surface reconstruction on a regular grid.
//!
//! Normals are splatted to a vector field `V`, the indicator `chi` solves
//! `lap(chi) = div(V)` with Neumann boundary conditions, and the surface is the
//! `chi = iso` level set after normalizing `chi` so its mean over the samples
//! equals `iso`.
//!
//! The discretization is node centered. Boundary nodes use mirror ghosts, which
//! keeps the Neumann condition second order; rows are weighted by the node's
//! dual-cell volume so the system matrix is symmetric and CG applies.

use log::{debug, info, warn};
use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::grid::{GridSpec, ScalarGrid, VectorGrid};
use super::marching_cubes::extract_isosurface;
use crate::error::{Error, Result};
use crate::geometry::spatial::KdTree;
use crate::geometry::{mean_nearest_neighbor_distance, OrientedPointCloud, TriangleMesh};

/// Which area is reported for open sheets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SheetArea {
    /// Larger of the trimmed areas facing along and against the nearest
    /// input normal.
    #[default]
    Facing,
    /// Half of the trimmed area.
    Half,
    /// The trimmed area.
    Trimmed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoissonConfig {
    /// Resolution exponent: `2^depth` nodes on the longest axis.
    pub depth: u32,
    /// Cap applied to `depth`.
    pub max_depth: u32,
    /// Lowers the depth until a grid cell holds at least this many samples of
    /// a surface sampled at the mean NN spacing. Zero disables the cap.
    pub samples_per_node: f64,
    pub iso: f64,
    /// Triangles farther than this multiple of the mean NN distance from every
    /// input point are removed.
    pub trim_mult: f64,
    pub pad_frac: f64,
    pub rtol: f64,
    pub sheet_area: SheetArea,
}

impl Default for PoissonConfig {
    fn default() -> Self {
        Self {
            depth: 9,
            max_depth: 8,
            samples_per_node: 1.5,
            iso: 0.5,
            trim_mult: 3.0,
            pad_frac: 0.1,
            rtol: 1e-6,
            sheet_area: SheetArea::Facing,
        }
    }
}

impl PoissonConfig {
    pub fn effective_depth(&self) -> u32 {
        self.depth.min(self.max_depth)
    }

    /// Depth after also applying the sample-density cap for a cloud whose
    /// padded longest extent is `extent` and mean NN distance is `mean_nn`.
    pub fn density_depth(&self, extent: f64, mean_nn: f64) -> u32 {
        let depth = self.effective_depth();
        if !(self.samples_per_node > 0.0) || !(mean_nn > 0.0) || !extent.is_finite() {
            return depth;
        }
        let min_cell = self.samples_per_node.sqrt() * mean_nn;
        let cap = (extent / min_cell).log2().floor();
        if cap < depth as f64 {
            (cap.max(2.0)) as u32
        } else {
            depth
        }
    }
}

/// Result of a converged solve.
#[derive(Debug, Clone)]
pub struct PoissonSolution {
    /// Mean-centered solution.
    pub chi: ScalarGrid,
    pub iterations: usize,
    /// Final relative residual.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct PoissonReconstruction {
    /// Density-trimmed mesh.
    pub mesh: TriangleMesh,
    /// Area of the untrimmed iso-surface.
    pub raw_area: f64,
    pub trimmed_area: f64,
    pub front_area: f64,
    pub back_area: f64,
    /// Area selected by [`PoissonConfig::sheet_area`].
    pub area: f64,
    pub solution_iterations: usize,
    pub residual: f64,
    pub dims: [usize; 3],
}

/// Grid covering the cloud with `nodes` nodes on the longest axis.
pub fn grid_for(cloud: &OrientedPointCloud, nodes: usize, pad_frac: f64) -> Result<GridSpec> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput("oriented cloud has no points".into()));
    }
    let (lo, hi) = crate::geometry::bounding_box(cloud.points());
    GridSpec::covering(&lo, &hi, nodes, pad_frac)
}

/// Distributes each normal to the 8 nodes of its cell with trilinear weights.
pub fn splat_normals(cloud: &OrientedPointCloud, spec: GridSpec) -> Result<VectorGrid> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput("oriented cloud has no points".into()));
    }
    let mut v = VectorGrid::zeros(spec);
    for (p, n) in cloud.points().iter().zip(cloud.normals()) {
        for (node, w) in spec.trilinear(p) {
            v.values[node] += n * w;
        }
    }
    Ok(v)
}

/// Dual-cell volume fraction of each node: 1/2 per boundary axis.
fn node_weights(spec: &GridSpec) -> Vec<f64> {
    let [nx, ny, nz] = spec.dims;
    let half = |i: usize, n: usize| if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
    let mut w = Vec::with_capacity(spec.len());
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                w.push(half(i, nx) * half(j, ny) * half(k, nz));
            }
        }
    }
    w
}

/// Central-difference divergence. Normal components are mirrored oddly across
/// the boundary, matching the Neumann ghosts of the Laplacian.
pub fn divergence(v: &VectorGrid) -> Vec<f64> {
    let spec = v.spec;
    let [nx, ny, nz] = spec.dims;
    let h = spec.spacing;
    let stride = [1, nx, nx * ny];
    let mut out = vec![0.0; spec.len()];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = spec.index(i, j, k);
                let pos = [i, j, k];
                let mut d = 0.0;
                for a in 0..3 {
                    let n = spec.dims[a];
                    let s = stride[a];
                    d += if pos[a] == 0 {
                        v.values[idx + s][a] / h
                    } else if pos[a] + 1 == n {
                        -v.values[idx - s][a] / h
                    } else {
                        (v.values[idx + s][a] - v.values[idx - s][a]) / (2.0 * h)
                    };
                }
                out[idx] = d;
            }
        }
    }
    out
}

/// `out = -W L x`, the symmetric positive semidefinite system matrix.
fn apply_operator(spec: &GridSpec, weights: &[f64], x: &[f64], out: &mut [f64]) {
    let [nx, ny, nz] = spec.dims;
    let inv_h2 = 1.0 / (spec.spacing * spec.spacing);
    let sy = nx;
    let sz = nx * ny;
    for k in 0..nz {
        for j in 0..ny {
            let row = nx * (j + ny * k);
            for i in 0..nx {
                let idx = row + i;
                let c = x[idx];
                let xm = if i > 0 { x[idx - 1] } else { x[idx + 1] };
                let xp = if i + 1 < nx { x[idx + 1] } else { x[idx - 1] };
                let ym = if j > 0 { x[idx - sy] } else { x[idx + sy] };
                let yp = if j + 1 < ny { x[idx + sy] } else { x[idx - sy] };
                let zm = if k > 0 { x[idx - sz] } else { x[idx + sz] };
                let zp = if k + 1 < nz { x[idx + sz] } else { x[idx - sz] };
                out[idx] = weights[idx] * (6.0 * c - xm - xp - ym - yp - zm - zp) * inv_h2;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    dot(values, weights) / weights.iter().sum::<f64>()
}

/// Solves `lap(chi) = rhs` with Neumann boundary by Jacobi-preconditioned
/// CG. The right-hand side is projected onto the compatible subspace first.
/// Returns the mean-centered solution.
pub fn solve_neumann(spec: GridSpec, rhs: &[f64], rtol: f64) -> Result<PoissonSolution> {
    let n = spec.len();
    if rhs.len() != n {
        return Err(Error::Parameter(format!("rhs has {} entries for {} nodes", rhs.len(), n)));
    }
    let weights = node_weights(&spec);
    let mean = weighted_mean(rhs, &weights);
    // System: (-W L) x = -W (rhs - mean).
    let b: Vec<f64> = rhs.iter().zip(&weights).map(|(r, w)| -w * (r - mean)).collect();
    let b_norm = dot(&b, &b).sqrt();
    let max_iter = 10 * spec.dims.iter().sum::<usize>();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(PoissonSolution { chi: ScalarGrid::new(spec, x)?, iterations: 0, residual: 0.0 });
    }
    let inv_diag: Vec<f64> = weights
        .iter()
        .map(|w| spec.spacing * spec.spacing / (6.0 * w))
        .collect();
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut residual = 1.0;
    let mut iterations = 0;
    while iterations < max_iter {
        apply_operator(&spec, &weights, &p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        residual = dot(&r, &r).sqrt() / b_norm;
        if residual <= rtol {
            break;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if !(residual <= rtol) {
        return Err(Error::Numerical(format!(
            "Poisson CG stopped after {iterations} iterations with relative residual {residual:.3e}"
        )));
    }
    debug!("Poisson CG: {iterations} iterations, residual {residual:.3e}");
    let m = weighted_mean(&x, &weights);
    x.iter_mut().for_each(|v| *v -= m);
    Ok(PoissonSolution { chi: ScalarGrid::new(spec, x)?, iterations, residual })
}

/// Solves `lap(chi) = div(V)`; the result is mean-centered.
pub fn solve_poisson(v: &VectorGrid, rtol: f64) -> Result<PoissonSolution> {
    solve_neumann(v.spec, &divergence(v), rtol)
}

/// Affine rescaling of `chi` into an indicator: inside (against the normals)
/// above `iso`, outside below, and mean over `samples` exactly `iso`.
pub fn normalize_indicator(chi: &ScalarGrid, samples: &[Point3<f64>], iso: f64) -> Result<ScalarGrid> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no samples to normalize against".into()));
    }
    let c = samples.iter().map(|p| chi.sample(p)).sum::<f64>() / samples.len() as f64;
    let (lo, hi) = chi.min_max();
    let range = hi - lo;
    if !(range > 0.0) {
        return ScalarGrid::new(chi.spec, vec![iso; chi.values.len()]);
    }
    // chi grows along the normals, so the inside is where it is small.
    let values = chi.values.iter().map(|v| iso - (v - c) / range).collect();
    ScalarGrid::new(chi.spec, values)
}

/// Removes triangles whose centroid is farther than `max_dist` from every
/// point, returning the kept mesh and each kept triangle's nearest point.
fn density_trim(mesh: &TriangleMesh, tree: &KdTree<3>, max_dist: f64) -> (TriangleMesh, Vec<usize>) {
    let mut nearest = Vec::with_capacity(mesh.triangles().len());
    let keep: Vec<bool> = (0..mesh.triangles().len())
        .map(|t| {
            let c = mesh.triangle_centroid(t);
            let nn = tree.nearest(&[c.x, c.y, c.z]).expect("non-empty tree");
            let ok = nn.dist_sq.sqrt() <= max_dist;
            if ok {
                nearest.push(nn.index);
            }
            ok
        })
        .collect();
    (mesh.retain_triangles(|t| keep[t]), nearest)
}

/// Splat, solve, extract the `iso` level set, and density-trim.
pub fn reconstruct_poisson(cloud: &OrientedPointCloud, cfg: &PoissonConfig) -> Result<PoissonReconstruction> {
    if cloud.len() < 2 {
        return Err(Error::EmptyInput("Poisson reconstruction needs at least two points".into()));
    }
    if !(cfg.trim_mult > 0.0) {
        return Err(Error::Parameter(format!("trim_mult must be positive, got {}", cfg.trim_mult)));
    }
    let depth = cfg.effective_depth();
    if depth < 2 {
        return Err(Error::Parameter(format!("Poisson depth must be at least 2, got {depth}")));
    }
    if cfg.depth > cfg.max_depth {
        info!("Poisson depth {} capped at {}", cfg.depth, cfg.max_depth);
    }
    if !(cfg.samples_per_node >= 0.0) {
        return Err(Error::Parameter(format!("samples_per_node must be non-negative, got {}", cfg.samples_per_node)));
    }
    let mean_nn = mean_nearest_neighbor_distance(cloud.points())?;
    let (lo, hi) = crate::geometry::bounding_box(cloud.points());
    let extent = (hi - lo).max() * (1.0 + 2.0 * cfg.pad_frac.max(0.0));
    let capped = cfg.density_depth(extent, mean_nn);
    if capped < depth {
        info!("Poisson depth {depth} lowered to {capped} by sample density");
    }
    let depth = capped;
    let spec = grid_for(cloud, (1usize << depth) + 1, cfg.pad_frac)?;
    let v = splat_normals(cloud, spec)?;
    let sol = solve_poisson(&v, cfg.rtol)?;
    let indicator = normalize_indicator(&sol.chi, cloud.points(), cfg.iso)?;
    let raw = extract_isosurface(&indicator, cfg.iso)?;
    // Marching cubes orients toward increasing values; the outside is low.
    let raw = raw.flipped();
    let raw_area = raw.area();

    let tree = KdTree::new(cloud.points().iter().map(|p| [p.x, p.y, p.z]).collect());
    let (mesh, nearest) = density_trim(&raw, &tree, cfg.trim_mult * mean_nn);
    let (mut front, mut back) = (0.0, 0.0);
    for (t, &i) in nearest.iter().enumerate() {
        let cross = mesh.triangle_cross(t);
        let a = 0.5 * cross.norm();
        if cross.dot(&cloud.normals()[i]) >= 0.0 {
            front += a;
        } else {
            back += a;
        }
    }
    let trimmed_area = front + back;
    if mesh.is_empty() {
        warn!("Poisson: no triangles survived density trimming");
    }
    let area = match cfg.sheet_area {
        SheetArea::Facing => front.max(back),
        SheetArea::Half => 0.5 * trimmed_area,
        SheetArea::Trimmed => trimmed_area,
    };
    Ok(PoissonReconstruction {
        mesh,
        raw_area,
        trimmed_area,
        front_area: front,
        back_area: back,
        area,
        solution_iterations: sol.iterations,
        residual: sol.residual,
        dims: spec.dims,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    pub(crate) fn fibonacci_sphere(n: usize, radius: f64) -> OrientedPointCloud {
        let golden = PI * (3.0 - 5f64.sqrt());
        let (pts, nrm): (Vec<_>, Vec<_>) = (0..n)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let rho = (1.0 - z * z).sqrt();
                let t = golden * i as f64;
                let d = Vector3::new(rho * t.cos(), rho * t.sin(), z);
                (Point3::from(d * radius), d)
            })
            .unzip();
        OrientedPointCloud::normalizing(pts, nrm).unwrap()
    }

    fn plane_patch(n: usize, side: f64) -> OrientedPointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let step = side / (n - 1) as f64;
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let jit = |k: usize, r: &mut ChaCha8Rng| if k == 0 || k + 1 == n { 0.0 } else { (r.random::<f64>() - 0.5) * 0.3 * step };
                let (a, b) = (jit(i, &mut rng), jit(j, &mut rng));
                pts.push(Point3::new(i as f64 * step + a, j as f64 * step + b, 0.0));
            }
        }
        let nrm = vec![Vector3::z(); pts.len()];
        OrientedPointCloud::new(pts, nrm).unwrap()
    }

    #[test]
    fn density_cap_keeps_cells_above_spacing() {
        let cfg = PoissonConfig::default();
        // 12 units at 0.1 spacing: 2^6 cells of 0.1875 >= sqrt(1.5) * 0.1.
        assert_eq!(cfg.density_depth(12.0, 0.1), 6);
        assert_eq!(cfg.density_depth(12.0, 1e-4), 8);
        let off = PoissonConfig { samples_per_node: 0.0, ..cfg };
        assert_eq!(off.density_depth(12.0, 0.1), 8);
    }

    #[test]
    fn splat_conserves_normals() {
        let spec = GridSpec::new(Point3::origin(), 1.0, [4, 4, 4]).unwrap();
        let one = OrientedPointCloud::new(vec![Point3::new(1.5, 1.5, 1.5)], vec![Vector3::z()]).unwrap();
        let v = splat_normals(&one, spec).unwrap();
        let touched: Vec<_> = v.values.iter().filter(|x| x.norm() > 0.0).collect();
        assert_eq!(touched.len(), 8);
        assert!((v.total() - Vector3::z()).norm() < 1e-15);

        let cloud = fibonacci_sphere(500, 1.0);
        let spec = grid_for(&cloud, 17, 0.1).unwrap();
        let v = splat_normals(&cloud, spec).unwrap();
        let sum: Vector3<f64> = cloud.normals().iter().sum();
        assert!((v.total() - sum).norm() < 1e-9);

        let up = OrientedPointCloud::new(cloud.points().to_vec(), vec![Vector3::z(); 500]).unwrap();
        let v = splat_normals(&up, spec).unwrap();
        assert!(v.values.iter().all(|x| x.x == 0.0 && x.y == 0.0));
    }

    #[test]
    fn zero_field_gives_constant() {
        let spec = GridSpec::new(Point3::origin(), 0.1, [9, 7, 5]).unwrap();
        let sol = solve_poisson(&VectorGrid::zeros(spec), 1e-6).unwrap();
        let (lo, hi) = sol.chi.min_max();
        assert!(hi - lo <= 1e-9);
    }

    /// Max error of the solve for `g = cos(pi x) cos(pi y) cos(pi z)` on the
    /// unit cube with `n` nodes per axis.
    fn manufactured_error(n: usize) -> f64 {
        let spec = GridSpec::new(Point3::origin(), 1.0 / (n - 1) as f64, [n; 3]).unwrap();
        let g = |p: &Point3<f64>| (PI * p.x).cos() * (PI * p.y).cos() * (PI * p.z).cos();
        let v = VectorGrid::from_fn(spec, |p| {
            let (cx, cy, cz) = ((PI * p.x).cos(), (PI * p.y).cos(), (PI * p.z).cos());
            let (sx, sy, sz) = ((PI * p.x).sin(), (PI * p.y).sin(), (PI * p.z).sin());
            -PI * Vector3::new(sx * cy * cz, cx * sy * cz, cx * cy * sz)
        });
        let sol = solve_poisson(&v, 1e-10).unwrap();
        let exact = ScalarGrid::from_fn(spec, g).unwrap();
        let w = node_weights(&spec);
        let mean = weighted_mean(&exact.values, &w);
        sol.chi.values.iter().zip(&exact.values).map(|(a, b)| (a - (b - mean)).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn manufactured_solution_is_second_order() {
        let (coarse, fine) = (manufactured_error(17), manufactured_error(33));
        let order = (coarse / fine).log2();
        assert!((order - 2.0).abs() <= 0.3, "errors {coarse:.3e} {fine:.3e}, order {order}");
    }

    #[test]
    fn sphere_indicator_inside_outside() {
        let cloud = fibonacci_sphere(4000, 1.0);
        let spec = grid_for(&cloud, 64, 0.1).unwrap();
        let sol = solve_poisson(&splat_normals(&cloud, spec).unwrap(), 1e-6).unwrap();
        assert!(sol.residual <= 1e-6);
        let chi = normalize_indicator(&sol.chi, cloud.points(), 0.5).unwrap();
        let mean: f64 = cloud.points().iter().map(|p| chi.sample(p)).sum::<f64>() / 4000.0;
        assert!((mean - 0.5).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (lo, hi) = (spec.origin, spec.max_corner());
        let (mut ok, mut total) = (0, 0);
        while total < 2000 {
            let p = Point3::new(
                rng.random_range(lo.x..hi.x),
                rng.random_range(lo.y..hi.y),
                rng.random_range(lo.z..hi.z),
            );
            let r = p.coords.norm();
            if r < 0.8 {
                ok += (chi.sample(&p) > 0.5) as usize;
            } else if r > 1.2 {
                ok += (chi.sample(&p) < 0.5) as usize;
            } else {
                continue;
            }
            total += 1;
        }
        assert!(ok as f64 >= 0.99 * total as f64, "{ok}/{total}");
    }

    #[test]
    fn sphere_area_depth6() {
        let cloud = fibonacci_sphere(20000, 1.0);
        let cfg = PoissonConfig { depth: 6, ..PoissonConfig::default() };
        let rec = reconstruct_poisson(&cloud, &cfg).unwrap();
        let exact = 4.0 * PI;
        assert!((rec.area - exact).abs() <= 0.05 * exact, "{rec:?}");
        assert!((rec.raw_area - exact).abs() <= 0.05 * exact);
    }

    #[test]
    fn noisy_sphere_area() {
        let clean = fibonacci_sphere(20000, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = Normal::new(0.0, 0.01).unwrap();
        let pts = clean
            .points()
            .iter()
            .map(|p| p + Vector3::new(d.sample(&mut rng), d.sample(&mut rng), d.sample(&mut rng)))
            .collect();
        let noisy = OrientedPointCloud::new(pts, clean.normals().to_vec()).unwrap();
        let rec = reconstruct_poisson(&noisy, &PoissonConfig { depth: 6, ..PoissonConfig::default() }).unwrap();
        let exact = 4.0 * PI;
        assert!((rec.area - exact).abs() <= 0.08 * exact, "{}", rec.area);
    }

    #[test]
    fn flat_patch_is_one_sided_sheet() {
        // The level set through the samples of an open sheet is a single
        // sheet; trimming leaves a band of width trim_mult * mean NN around it.
        let cloud = plane_patch(60, 1.0);
        let cfg = PoissonConfig { depth: 6, ..PoissonConfig::default() };
        let rec = reconstruct_poisson(&cloud, &cfg).unwrap();
        let band = cfg.trim_mult * mean_nearest_neighbor_distance(cloud.points()).unwrap();
        assert!(rec.back_area <= 1e-3 * rec.front_area);
        assert!(rec.area >= 1.0 && rec.area <= (1.0 + 2.0 * band).powi(2), "{rec:?}");
        assert!(rec.raw_area > rec.trimmed_area);
        let half = PoissonConfig { sheet_area: SheetArea::Half, ..cfg };
        let rec_half = reconstruct_poisson(&cloud, &half).unwrap();
        assert!((rec_half.area - 0.5 * rec.trimmed_area).abs() < 1e-12);
    }
}
