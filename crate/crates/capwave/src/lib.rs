//! Variational solver for fully localised solitary waves on deep-layered
//! water with strong surface tension.
//!
//! The crate minimises a wave energy over surface elevations at fixed
//! horizontal momentum. The heavy kernel is a Dirichlet–Neumann style
//! operator evaluated through a boundary-value problem on a flattened slab;
//! everything else (functionals, gradients, descent loop, CLI) is layered on
//! top of that solve.

pub mod chebyshev;
pub mod cli;
pub mod error;
pub mod field;
pub mod functionals;
pub mod gradients;
pub mod grid;
pub mod io;
pub mod minimizer;
pub mod slab;
pub mod transforms;

pub use error::{Error, Result};
pub use field::{StarSign, SurfaceField};
pub use grid::GridSpec;
