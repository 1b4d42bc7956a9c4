//! Numerical solver and verification harness for inverse mean curvature flow
//! of star-shaped hypersurfaces with free boundary on a convex cone inside a
//! warped product line over a sphere.
//!
//! The flow is integrated as a scalar graph equation for the flow coordinate
//! phi over a geodesic cap, with a homogeneous Neumann condition at the cone.
//! The crate is organized as:
//!
//! - [`warp`]: warping function catalog and admissibility checks,
//! - [`mesh`]: cap discretization and covariant finite differences,
//! - [`surface`]: induced metric and curvature of graph hypersurfaces,
//! - [`flow`]: explicit method-of-lines time integration,
//! - [`oracle`]: exact radial solutions for cross-checking,
//! - [`diagnostics`]: a priori bound monitors, decay fits, reporting,
//! - [`config`] and [`cli`]: experiment plumbing for the `imcf` binary.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod mesh;
pub mod oracle;
pub mod surface;
pub mod util;
pub mod warp;

pub use error::{Error, Result};
