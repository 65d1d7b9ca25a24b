//! Numerical laboratory for nonlocal diffusion with dynamical boundary conditions.
//!
//! A box domain is split into an interior and a boundary strip of width `r`.
//! Strip values evolve in time while interior values solve a stationary
//! nonlocal equation at every instant, so the strip dynamics are driven by a
//! nonlocal Dirichlet-to-Neumann-like map.
//!
//! Modules, bottom up: [`geometry`] (grids), [`kernel`] (weights), [`elliptic`]
//! (extension into the interior), [`evolution`] (time stepping), [`analysis`]
//! (spectral gap, decay fits, diagnostics) and [`cli`] (config-driven runs).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod elliptic;
pub mod error;
pub mod evolution;
pub mod fixtures;
pub mod geometry;
pub mod kernel;
mod linalg;
pub mod sparse;

pub use elliptic::{FullField, SolverOptions, StripField};
pub use error::{Error, ErrorCategory, Result};
pub use geometry::{DomainBox, Grid, GridOptions, NodeClass};
pub use kernel::{EdgeMode, KernelFamily, KernelSpec, NonlocalOperator};
