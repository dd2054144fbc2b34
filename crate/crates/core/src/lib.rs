//! Leaf surface reconstruction from 3D point clouds.
//!
//! Nine reconstruction methods share one data model and one preprocessing
//! pipeline (statistical outlier removal, PCA alignment, normal estimation):
//!
//! * parametric splines: [`spline`] (B-spline interpolation, NURBS least squares)
//! * variational height fields: [`d2spline`] (thin-plate smoothing with GCV)
//! * projection methods: [`local`] (Delaunay 2.5D, MLS, LOESS)
//! * implicit and pivoting meshes: [`implicit`] (Poisson, ball pivoting)
//! * competitive learning: [`som`] (self-organizing map)
//!
//! The [`bench`] module runs any method on any leaf cloud and records surface
//! area, process CPU time and peak resident memory.

// `!(x > 0.0)` is used on purpose so NaN is rejected; index loops mirror the
// matrix formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bench;
pub mod d2spline;
pub mod error;
pub mod geometry;
pub mod implicit;
pub mod local;
pub mod som;
pub mod spline;

pub use error::{Error, Result};
pub use geometry::{Frame, OrientedPointCloud, PointCloud, TriangleMesh};
