//! Regular 3D lattices of scalar and vector samples.

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

/// Node layout shared by scalar and vector grids. Nodes are stored with x
/// varying fastest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub origin: Point3<f64>,
    pub spacing: f64,
    pub dims: [usize; 3],
}

impl GridSpec {
    pub fn new(origin: Point3<f64>, spacing: f64, dims: [usize; 3]) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::Parameter(format!("grid spacing must be positive, got {spacing}")));
        }
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::Parameter(format!("grid needs at least 2 nodes per axis, got {dims:?}")));
        }
        if !origin.iter().all(|c| c.is_finite()) {
            return Err(Error::Parameter("grid origin is not finite".into()));
        }
        Ok(Self { origin, spacing, dims })
    }

    /// Cubic-cell grid over `[lo, hi]` padded on every side by `pad_frac`
    /// times the longest extent, with `nodes` nodes on the longest axis.
    /// Shorter axes are centered on the box.
    pub fn covering(lo: &Point3<f64>, hi: &Point3<f64>, nodes: usize, pad_frac: f64) -> Result<Self> {
        if nodes < 2 {
            return Err(Error::Parameter(format!("grid needs at least 2 nodes, got {nodes}")));
        }
        let extent = (hi - lo).max().max(f64::MIN_POSITIVE.sqrt());
        let pad = pad_frac.max(0.0) * extent;
        let spacing = (extent + 2.0 * pad) / (nodes - 1) as f64;
        let mut origin = Point3::origin();
        let mut dims = [0; 3];
        for a in 0..3 {
            let span = hi[a] - lo[a] + 2.0 * pad;
            dims[a] = ((span / spacing - 1e-9).ceil() as usize + 1).clamp(2, nodes);
            let center = 0.5 * (lo[a] + hi[a]);
            origin[a] = center - 0.5 * (dims[a] - 1) as f64 * spacing;
        }
        Self::new(origin, spacing, dims)
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn position(&self, i: usize, j: usize, k: usize) -> Point3<f64> {
        self.origin + Vector3::new(i as f64, j as f64, k as f64) * self.spacing
    }

    /// Upper corner of the lattice.
    pub fn max_corner(&self) -> Point3<f64> {
        self.position(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1)
    }

    /// Cell containing `p` (clamped to the lattice) and the local coordinates
    /// of `p` in it, each in `[0, 1]` when `p` is inside.
    pub fn locate(&self, p: &Point3<f64>) -> ([usize; 3], [f64; 3]) {
        let mut cell = [0; 3];
        let mut t = [0.0; 3];
        for a in 0..3 {
            let f = (p[a] - self.origin[a]) / self.spacing;
            let c = (f.floor().max(0.0) as usize).min(self.dims[a] - 2);
            cell[a] = c;
            t[a] = (f - c as f64).clamp(0.0, 1.0);
        }
        (cell, t)
    }

    /// The 8 corner nodes of the cell around `p` with their trilinear weights.
    pub fn trilinear(&self, p: &Point3<f64>) -> [(usize, f64); 8] {
        let ([i, j, k], [tx, ty, tz]) = self.locate(p);
        let mut out = [(0, 0.0); 8];
        for (c, slot) in out.iter_mut().enumerate() {
            let (dx, dy, dz) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
            let w = if dx == 1 { tx } else { 1.0 - tx }
                * if dy == 1 { ty } else { 1.0 - ty }
                * if dz == 1 { tz } else { 1.0 - tz };
            *slot = (self.index(i + dx, j + dy, k + dz), w);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::Parameter(format!(
                "grid of {} nodes given {} values",
                spec.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite grid value".into()));
        }
        Ok(Self { spec, values })
    }

    /// Samples `f` at every node.
    pub fn from_fn(spec: GridSpec, f: impl Fn(&Point3<f64>) -> f64) -> Result<Self> {
        let [nx, ny, nz] = spec.dims;
        let mut values = Vec::with_capacity(spec.len());
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    values.push(f(&spec.position(i, j, k)));
                }
            }
        }
        Self::new(spec, values)
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.spec.index(i, j, k)]
    }

    /// Trilinear interpolation, clamped to the lattice.
    pub fn sample(&self, p: &Point3<f64>) -> f64 {
        self.spec.trilinear(p).iter().map(|&(n, w)| w * self.values[n]).sum()
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorGrid {
    pub spec: GridSpec,
    pub values: Vec<Vector3<f64>>,
}

impl VectorGrid {
    pub fn zeros(spec: GridSpec) -> Self {
        Self { spec, values: vec![Vector3::zeros(); spec.len()] }
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(&Point3<f64>) -> Vector3<f64>) -> Self {
        let [nx, ny, nz] = spec.dims;
        let mut values = Vec::with_capacity(spec.len());
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    values.push(f(&spec.position(i, j, k)));
                }
            }
        }
        Self { spec, values }
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.values[self.spec.index(i, j, k)]
    }

    pub fn total(&self) -> Vector3<f64> {
        self.values.iter().sum()
    }
}
