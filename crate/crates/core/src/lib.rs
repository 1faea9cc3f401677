//! Minimizing-movements (Almgren–Taylor–Wang) simulation of anisotropic,
//! inhomogeneous mean curvature flow with mobility and forcing on uniform 2D grids.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, scenario parsing and
//! the command line live in the `atwflow` companion crate.
//!
//! Module map:
//!
//! * [`anisotropy`]: surface tensions / mobilities, polars, derivatives, φ-curvature.
//! * [`distance`]: Finsler signed distances via a Hopf–Lax fast-sweeping eikonal solver.
//! * [`incremental`]: one minimizing-movements step (relaxed primal-dual solve + thresholding).
//! * [`flow`]: the discrete flow, its diagnostics and refinement studies.
//! * [`levelset`]: ladder-of-levels evolution of level-set functions.
//! * [`verification`]: weak curvature, distributional laws and geometric identity checks.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod anisotropy;
pub mod distance;
mod error;
pub mod expr;
pub mod flow;
pub mod geom;
pub mod grid;
pub mod incremental;
pub mod interface;
pub mod levelset;
pub mod set;
pub mod stats;
pub mod verification;

pub use crate::anisotropy::{AnisotropyModel, Family, FrozenModel, LocalAnisotropy};
pub use crate::error::{Error, Result};
pub use crate::expr::Expr;
pub use crate::grid::{Grid, ScalarField};
pub use crate::set::{Extent, SetState, Shape};
