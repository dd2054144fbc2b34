//! Implicit-function meshing (Poisson) and ball pivoting.

pub mod bpa;
pub mod grid;
pub mod marching_cubes;
mod mc_tables;
pub mod poisson;

pub use bpa::{adaptive_ball_radius, reconstruct_bpa, BpaConfig, BpaReconstruction};
pub use grid::{GridSpec, ScalarGrid, VectorGrid};
pub use marching_cubes::extract_isosurface;
pub use poisson::{
    reconstruct_poisson, solve_neumann, solve_poisson, splat_normals, PoissonConfig, PoissonReconstruction,
    PoissonSolution, SheetArea,
};
