//! Numerical toolkit for 2-currents carried by Lipschitz Q-valued graphs in R^4.
//!
//! The crate covers exterior algebra on `Λ²R⁴`, an explicit three-plane
//! construction together with its measures on the oriented Grassmannian,
//! triangulated multigraph currents, a degenerate anisotropic integrand and
//! a two-sided bracket for its envelope, and a piecewise-affine approximation
//! pipeline for Q-valued maps.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod approx;
pub mod assignment;
pub mod construction;
pub mod current;
pub mod energy;
pub mod error;
pub mod exterior;
pub mod measures;
pub mod multipoint;

pub use error::{Error, Result};
pub use exterior::{Matrix22, MultiVector2, OrientedPlane, PlaneClass};
