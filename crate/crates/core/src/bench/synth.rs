//! Analytic test shapes with known surface area.

use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticShape {
    /// Square `[0, side]^2` in `z = 0`.
    Plane { side: f64, n: usize, noise: f64 },
    /// `z = curvature * (x^2 + y^2)` over the disk of `radius`.
    Paraboloid { radius: f64, curvature: f64, n: usize, noise: f64 },
    Sphere { radius: f64, n: usize, noise: f64 },
    /// Plane with a centered circular hole; `n` counts the grid before the
    /// hole is cut.
    HolePlane { side: f64, n: usize, hole_radius: f64, noise: f64 },
    /// Plane whose right half keeps only `keep_frac` of its samples.
    DecimatedPlane { side: f64, n: usize, keep_frac: f64, noise: f64 },
}

#[derive(Debug, Clone)]
pub struct SyntheticSample {
    pub cloud: PointCloud,
    /// Unit normals of the noise-free surface at each sample.
    pub normals: Vec<Vector3<f64>>,
    pub area: f64,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must be positive, got {v}")))
    }
}

impl SyntheticShape {
    pub fn kind_name(&self) -> &'static str {
        match self {
            SyntheticShape::Plane { .. } => "plane",
            SyntheticShape::Paraboloid { .. } => "paraboloid",
            SyntheticShape::Sphere { .. } => "sphere",
            SyntheticShape::HolePlane { .. } => "hole_plane",
            SyntheticShape::DecimatedPlane { .. } => "decimated_plane",
        }
    }

    /// Shape of the given kind with defaults overridden by `k=v,...` pairs.
    pub fn from_params(kind: &str, params: &str) -> Result<Self> {
        let mut shape = match kind {
            "plane" => SyntheticShape::Plane { side: 10.0, n: 10_000, noise: 0.0 },
            "paraboloid" => SyntheticShape::Paraboloid { radius: 1.0, curvature: 0.25, n: 10_000, noise: 0.0 },
            "sphere" => SyntheticShape::Sphere { radius: 1.0, n: 20_000, noise: 0.0 },
            "hole_plane" => SyntheticShape::HolePlane { side: 10.0, n: 10_000, hole_radius: 2.0, noise: 0.0 },
            "decimated_plane" => SyntheticShape::DecimatedPlane { side: 10.0, n: 10_000, keep_frac: 0.1, noise: 0.0 },
            _ => return Err(Error::Parameter(format!("unknown shape {kind:?}"))),
        };
        for pair in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::Parameter(format!("expected key=value, got {pair:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            let bad = || Error::Parameter(format!("cannot parse {k} = {v:?}"));
            let f = || v.parse::<f64>().map_err(|_| bad());
            let slot: &mut f64 = match (&mut shape, k) {
                (SyntheticShape::Plane { n, .. }, "n")
                | (SyntheticShape::Paraboloid { n, .. }, "n")
                | (SyntheticShape::Sphere { n, .. }, "n")
                | (SyntheticShape::HolePlane { n, .. }, "n")
                | (SyntheticShape::DecimatedPlane { n, .. }, "n") => {
                    *n = v.parse().map_err(|_| bad())?;
                    continue;
                }
                (SyntheticShape::Plane { noise, .. }, "noise")
                | (SyntheticShape::Paraboloid { noise, .. }, "noise")
                | (SyntheticShape::Sphere { noise, .. }, "noise")
                | (SyntheticShape::HolePlane { noise, .. }, "noise")
                | (SyntheticShape::DecimatedPlane { noise, .. }, "noise") => noise,
                (SyntheticShape::Plane { side, .. }, "side")
                | (SyntheticShape::HolePlane { side, .. }, "side")
                | (SyntheticShape::DecimatedPlane { side, .. }, "side") => side,
                (SyntheticShape::Paraboloid { radius, .. }, "radius")
                | (SyntheticShape::Sphere { radius, .. }, "radius") => radius,
                (SyntheticShape::Paraboloid { curvature, .. }, "curvature") => curvature,
                (SyntheticShape::HolePlane { hole_radius, .. }, "hole_radius") => hole_radius,
                (SyntheticShape::DecimatedPlane { keep_frac, .. }, "keep_frac") => keep_frac,
                _ => return Err(Error::Parameter(format!("shape {kind} has no parameter {k:?}"))),
            };
            *slot = f()?;
        }
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, noise) = match *self {
            SyntheticShape::Plane { side, n, noise } => {
                positive("side", side)?;
                (n, noise)
            }
            SyntheticShape::Paraboloid { radius, curvature, n, noise } => {
                positive("radius", radius)?;
                if !curvature.is_finite() {
                    return Err(Error::Parameter("curvature must be finite".into()));
                }
                (n, noise)
            }
            SyntheticShape::Sphere { radius, n, noise } => {
                positive("radius", radius)?;
                (n, noise)
            }
            SyntheticShape::HolePlane { side, n, hole_radius, noise } => {
                positive("side", side)?;
                positive("hole_radius", hole_radius)?;
                if 2.0 * hole_radius >= side {
                    return Err(Error::Parameter("hole must fit inside the plane".into()));
                }
                (n, noise)
            }
            SyntheticShape::DecimatedPlane { side, n, keep_frac, noise } => {
                positive("side", side)?;
                if !(keep_frac > 0.0 && keep_frac <= 1.0) {
                    return Err(Error::Parameter(format!("keep_frac must be in (0, 1], got {keep_frac}")));
                }
                (n, noise)
            }
        };
        if n < 16 {
            return Err(Error::Parameter(format!("need at least 16 samples, got {n}")));
        }
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(Error::Parameter(format!("noise must be >= 0, got {noise}")));
        }
        Ok(())
    }

    /// Exact area for planes and spheres; adaptive quadrature for the
    /// paraboloid.
    pub fn analytic_area(&self) -> f64 {
        match *self {
            SyntheticShape::Plane { side, .. } | SyntheticShape::DecimatedPlane { side, .. } => side * side,
            SyntheticShape::Sphere { radius, .. } => 4.0 * PI * radius * radius,
            SyntheticShape::HolePlane { side, hole_radius, .. } => side * side - PI * hole_radius * hole_radius,
            SyntheticShape::Paraboloid { radius, curvature, .. } => {
                graph_area_over_disk(|x, y| [2.0 * curvature * x, 2.0 * curvature * y], radius, 1e-12)
            }
        }
    }

    pub fn generate(&self, seed: u64) -> Result<SyntheticSample> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut points, normals) = match *self {
            SyntheticShape::Plane { side, n, .. } => jittered_grid(side, n, &mut rng),
            SyntheticShape::HolePlane { side, n, hole_radius, .. } => {
                let (p, nrm) = jittered_grid(side, n, &mut rng);
                let c = 0.5 * side;
                p.into_iter()
                    .zip(nrm)
                    .filter(|(q, _)| (q.x - c).hypot(q.y - c) > hole_radius)
                    .unzip()
            }
            SyntheticShape::DecimatedPlane { side, n, keep_frac, .. } => {
                let (p, nrm) = jittered_grid(side, n, &mut rng);
                p.into_iter()
                    .zip(nrm)
                    .filter(|(q, _)| q.x <= 0.5 * side || rng.random::<f64>() < keep_frac)
                    .unzip()
            }
            SyntheticShape::Sphere { radius, n, .. } => fibonacci_sphere(radius, n),
            SyntheticShape::Paraboloid { radius, curvature, n, .. } => sunflower_paraboloid(radius, curvature, n),
        };
        let noise = match *self {
            SyntheticShape::Plane { noise, .. }
            | SyntheticShape::Paraboloid { noise, .. }
            | SyntheticShape::Sphere { noise, .. }
            | SyntheticShape::HolePlane { noise, .. }
            | SyntheticShape::DecimatedPlane { noise, .. } => noise,
        };
        if noise > 0.0 {
            let dist = Normal::new(0.0, noise).map_err(|e| Error::Parameter(e.to_string()))?;
            for (p, nrm) in points.iter_mut().zip(&normals) {
                *p += nrm * dist.sample(&mut rng);
            }
        }
        let cloud = PointCloud::with_id(points, self.kind_name())?;
        Ok(SyntheticSample { cloud, normals, area: self.analytic_area() })
    }
}

/// About `n` samples on an `m x m` grid over `[0, side]^2`, each jittered
/// within a quarter spacing. Samples on the border keep their border
/// coordinate so the footprint is exactly the square.
fn jittered_grid(side: f64, n: usize, rng: &mut ChaCha8Rng) -> (Vec<Point3<f64>>, Vec<Vector3<f64>>) {
    let m = ((n as f64).sqrt().round() as usize).max(2);
    let h = side / (m - 1) as f64;
    let mut pts = Vec::with_capacity(m * m);
    for j in 0..m {
        for i in 0..m {
            let mut coord = |k: usize| {
                let base = k as f64 * h;
                if k == 0 || k == m - 1 {
                    base
                } else {
                    base + rng.random_range(-0.25..0.25) * h
                }
            };
            let x = coord(i);
            let y = coord(j);
            pts.push(Point3::new(x, y, 0.0));
        }
    }
    let normals = vec![Vector3::z(); pts.len()];
    (pts, normals)
}

fn fibonacci_sphere(radius: f64, n: usize) -> (Vec<Point3<f64>>, Vec<Vector3<f64>>) {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let (s, c) = (golden * i as f64).sin_cos();
            let dir = Vector3::new(r * c, r * s, z);
            (Point3::from(dir * radius), dir)
        })
        .unzip()
}

fn sunflower_paraboloid(radius: f64, curvature: f64, n: usize) -> (Vec<Point3<f64>>, Vec<Vector3<f64>>) {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            // The last sample sits on the rim so the footprint is the full disk.
            let r = radius * ((i as f64 + 0.5) / (n as f64 - 0.5)).sqrt().min(1.0);
            let (s, c) = (golden * i as f64).sin_cos();
            let (x, y) = (r * c, r * s);
            let z = curvature * (x * x + y * y);
            let normal = Vector3::new(-2.0 * curvature * x, -2.0 * curvature * y, 1.0).normalize();
            (Point3::new(x, y, z), normal)
        })
        .unzip()
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 40)
}

/// Area of the graph of a height function over the disk of `radius`, given
/// its gradient: the integral of `sqrt(1 + |grad|^2)` in polar coordinates.
pub fn graph_area_over_disk(grad: impl Fn(f64, f64) -> [f64; 2], radius: f64, tol: f64) -> f64 {
    let inner = |theta: f64| {
        let (s, c) = theta.sin_cos();
        let integrand = |r: f64| {
            let [gx, gy] = grad(r * c, r * s);
            (1.0 + gx * gx + gy * gy).sqrt() * r
        };
        adaptive_simpson(&integrand, 0.0, radius, tol / (2.0 * PI))
    };
    adaptive_simpson(&inner, 0.0, 2.0 * PI, tol)
}
