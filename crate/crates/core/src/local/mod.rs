//! Projection-based reconstruction over the PCA plane: Delaunay 2.5D, MLS and LOESS.

pub mod delaunay;
pub mod fit;
pub mod kernels;
pub mod predicates;

pub use delaunay::{delaunay_2d, Triangulation2D};
pub use fit::{
    local_poly_fit, mean_uv_spacing, reconstruct_delaunay25d, reconstruct_loess, reconstruct_mls, smooth_heights,
    Kernel, LocalConfig, LocalEstimate, LocalFitConfig, LocalFitter, Neighborhood,
};
pub use kernels::{gaussian_weight, tricube_weight};
