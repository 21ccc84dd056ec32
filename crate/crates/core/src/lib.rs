//! Finite element transport on structured meshes with lowest-order
//! compatible spaces.
//!
//! The advected variable lives in a low-order space, is lifted into a
//! richer discontinuous space through an averaging recovery operator,
//! advected there with an upwind DG scheme, and projected back. The
//! crate also ships a mode-space stability engine for the 1D scheme, a
//! vertex-based slope limiter, and an experiment harness
//! (convergence studies, amplification sweeps, bounded transport) driven
//! by the `rdg` binary.

pub mod advection;
pub mod error;
pub mod harness;
pub mod limiter;
pub mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod recovery;
pub mod spaces;
pub mod vonneumann;

pub use error::{Error, Result};
