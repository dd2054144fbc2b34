//! Self-organizing map surface fitting.
//!
//! A `rows x cols` lattice of neurons starts flat on the cloud's uv bounding
//! box and is pulled toward the points by competitive learning. The trained
//! lattice is triangulated quad by quad.

use log::debug;
use nalgebra::Point3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, TriangleMesh};

/// Shape of the neighbourhood function around the winner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NeighborhoodKernel {
    /// `alpha * exp(-d^2 / (2 sigma^2))` over lattice distance `d`.
    #[default]
    Gaussian,
    /// `alpha` for `d <= sigma`, zero beyond.
    Hard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SomConfig {
    pub rows: usize,
    pub cols: usize,
    pub epochs: usize,
    pub alpha0: f64,
    pub alpha1: f64,
    /// Initial neighbourhood radius; `max(rows, cols) / 2` when unset.
    pub sigma0: Option<f64>,
    pub sigma1: f64,
    pub seed: u64,
    pub kernel: NeighborhoodKernel,
}

impl Default for SomConfig {
    fn default() -> Self {
        Self {
            rows: 20,
            cols: 20,
            epochs: 100,
            alpha0: 0.5,
            alpha1: 0.01,
            sigma0: None,
            sigma1: 0.5,
            seed: 0,
            kernel: NeighborhoodKernel::Gaussian,
        }
    }
}

/// Learning rate and radius as functions of training progress `t` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingSchedule {
    pub epochs: usize,
    pub alpha0: f64,
    pub alpha1: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    pub kernel: NeighborhoodKernel,
}

impl TrainingSchedule {
    pub fn from_config(cfg: &SomConfig) -> Result<Self> {
        let s = Self {
            epochs: cfg.epochs,
            alpha0: cfg.alpha0,
            alpha1: cfg.alpha1,
            sigma0: cfg.sigma0.unwrap_or(cfg.rows.max(cfg.cols) as f64 / 2.0),
            sigma1: cfg.sigma1,
            kernel: cfg.kernel,
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        let unit = |a: f64| a > 0.0 && a <= 1.0;
        if !(unit(self.alpha0) && unit(self.alpha1) && self.alpha1 <= self.alpha0) {
            return Err(Error::Parameter(format!(
                "learning rates need 0 < alpha1 <= alpha0 <= 1, got {} and {}",
                self.alpha0, self.alpha1
            )));
        }
        if !(self.sigma1 > 0.0 && self.sigma1 <= self.sigma0 && self.sigma0.is_finite()) {
            return Err(Error::Parameter(format!(
                "radii need 0 < sigma1 <= sigma0, got {} and {}",
                self.sigma0, self.sigma1
            )));
        }
        Ok(())
    }

    /// Linear decay.
    pub fn alpha(&self, t: f64) -> f64 {
        self.alpha0 + (self.alpha1 - self.alpha0) * t
    }

    /// Exponential decay.
    pub fn sigma(&self, t: f64) -> f64 {
        self.sigma0 * (self.sigma1 / self.sigma0).powf(t)
    }

    /// Neighbourhood weight at squared lattice distance `d2`.
    pub fn weight(&self, d2: f64, t: f64) -> f64 {
        let (a, s) = (self.alpha(t), self.sigma(t));
        match self.kernel {
            NeighborhoodKernel::Gaussian => a * (-d2 / (2.0 * s * s)).exp(),
            NeighborhoodKernel::Hard => {
                if d2 <= s * s {
                    a
                } else {
                    0.0
                }
            }
        }
    }
}

/// Neuron weights stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SomLattice {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<Point3<f64>>,
}

impl SomLattice {
    pub fn new(rows: usize, cols: usize, weights: Vec<Point3<f64>>) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::Parameter(format!("lattice must be at least 2x2, got {rows}x{cols}")));
        }
        if weights.len() != rows * cols {
            return Err(Error::Parameter(format!(
                "{rows}x{cols} lattice given {} weights",
                weights.len()
            )));
        }
        if weights.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::Numerical("non-finite neuron weight".into()));
        }
        Ok(Self { rows, cols, weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> Point3<f64> {
        self.weights[r * self.cols + c]
    }
}

/// Regular `rows x cols` grid over the uv bounding box at the median height.
pub fn init_lattice(cloud: &PointCloud, rows: usize, cols: usize) -> Result<SomLattice> {
    if rows < 2 || cols < 2 {
        return Err(Error::Parameter(format!("lattice must be at least 2x2, got {rows}x{cols}")));
    }
    let (lo, hi) = cloud.bounding_box();
    if !(hi.x > lo.x) || !(hi.y > lo.y) {
        return Err(Error::Degenerate("cloud has zero uv extent".into()));
    }
    let mut z: Vec<f64> = cloud.points().iter().map(|p| p.z).collect();
    z.sort_by(f64::total_cmp);
    let n = z.len();
    let median = if n % 2 == 1 { z[n / 2] } else { 0.5 * (z[n / 2 - 1] + z[n / 2]) };
    let lerp = |a: f64, b: f64, k: usize, m: usize| if k + 1 == m { b } else { a + (b - a) * k as f64 / (m - 1) as f64 };
    let weights = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .map(|(r, c)| Point3::new(lerp(lo.x, hi.x, c, cols), lerp(lo.y, hi.y, r, rows), median))
        .collect();
    SomLattice::new(rows, cols, weights)
}

/// Index of the neuron nearest `x`; the lowest index wins ties.
pub fn find_bmu(lattice: &SomLattice, x: &Point3<f64>) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, m) in lattice.weights.iter().enumerate() {
        let (dx, dy, dz) = (m.x - x.x, m.y - x.y, m.z - x.z);
        let d = dx * dx + dy * dy + dz * dz;
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Moves every neuron toward `x` by `h_ci` computed from the schedule at
/// progress `t`; returns the winner.
///
/// The Gaussian kernel factors over lattice rows and columns. Rows or columns
/// whose factor is below 1e-16 are skipped: the move would be below round-off.
pub fn som_update(lattice: &mut SomLattice, x: &Point3<f64>, t: f64, schedule: &TrainingSchedule) -> usize {
    let c = find_bmu(lattice, x);
    let (cr, cc) = (c / lattice.cols, c % lattice.cols);
    let cols = lattice.cols;
    match schedule.kernel {
        NeighborhoodKernel::Gaussian => {
            let (alpha, sigma) = (schedule.alpha(t), schedule.sigma(t));
            let g = |d: usize| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp();
            let gr: Vec<f64> = (0..lattice.rows).map(|r| g(r.abs_diff(cr))).collect();
            let gc: Vec<f64> = (0..cols).map(|k| g(k.abs_diff(cc))).collect();
            for (r, &wr) in gr.iter().enumerate().filter(|(_, &w)| w >= 1e-16) {
                let row = &mut lattice.weights[r * cols..(r + 1) * cols];
                for (m, &wc) in row.iter_mut().zip(&gc).filter(|(_, &w)| w >= 1e-16) {
                    *m += (x - *m) * (alpha * wr * wc);
                }
            }
        }
        NeighborhoodKernel::Hard => {
            for r in 0..lattice.rows {
                for k in 0..cols {
                    let (dr, dc) = (r.abs_diff(cr) as f64, k.abs_diff(cc) as f64);
                    let h = schedule.weight(dr * dr + dc * dc, t);
                    if h > 0.0 {
                        let m = &mut lattice.weights[r * cols + k];
                        *m += (x - *m) * h;
                    }
                }
            }
        }
    }
    c
}

/// Mean distance from each point to its best-matching neuron.
pub fn quantization_error(lattice: &SomLattice, points: &[Point3<f64>]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    points
        .iter()
        .map(|p| (lattice.weights[find_bmu(lattice, p)] - p).norm())
        .sum::<f64>()
        / points.len() as f64
}

/// Presents every point once per epoch in a freshly shuffled order.
pub fn som_train(lattice: &mut SomLattice, points: &[Point3<f64>], schedule: &TrainingSchedule, seed: u64) -> Result<()> {
    schedule.validate()?;
    if points.is_empty() {
        return Err(Error::EmptyInput("no training points".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..points.len()).collect();
    let total = schedule.epochs * points.len();
    let denom = total.saturating_sub(1).max(1) as f64;
    let mut step = 0usize;
    for _ in 0..schedule.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            som_update(lattice, &points[i], step as f64 / denom, schedule);
            step += 1;
        }
    }
    if lattice.weights.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(Error::Numerical("SOM training produced non-finite weights".into()));
    }
    Ok(())
}

/// Two triangles per lattice quad, split along the `(r, c)`-`(r+1, c+1)`
/// diagonal.
pub fn lattice_to_mesh(lattice: &SomLattice) -> Result<TriangleMesh> {
    let cols = lattice.cols;
    let mut triangles = Vec::with_capacity(2 * (lattice.rows - 1) * (cols - 1));
    for r in 0..lattice.rows - 1 {
        for c in 0..cols - 1 {
            let (a, b, d, e) = (r * cols + c, r * cols + c + 1, (r + 1) * cols + c + 1, (r + 1) * cols + c);
            triangles.push([a, b, d]);
            triangles.push([a, d, e]);
        }
    }
    TriangleMesh::new(lattice.weights.clone(), triangles)
}

#[derive(Debug, Clone)]
pub struct SomReconstruction {
    pub lattice: SomLattice,
    pub mesh: TriangleMesh,
    pub initial_error: f64,
    pub final_error: f64,
}

/// Initializes on the aligned cloud, trains, and triangulates.
pub fn reconstruct_som(cloud: &PointCloud, cfg: &SomConfig) -> Result<SomReconstruction> {
    let schedule = TrainingSchedule::from_config(cfg)?;
    let mut lattice = init_lattice(cloud, cfg.rows, cfg.cols)?;
    let initial_error = quantization_error(&lattice, cloud.points());
    som_train(&mut lattice, cloud.points(), &schedule, cfg.seed)?;
    let final_error = quantization_error(&lattice, cloud.points());
    debug!("SOM quantization error {initial_error:.4e} -> {final_error:.4e}");
    let mesh = lattice_to_mesh(&lattice)?;
    Ok(SomReconstruction { lattice, mesh, initial_error, final_error })
}
