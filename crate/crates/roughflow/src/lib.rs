//! Multiscale boundary-layer approximation of Euler flow above a rough wall,
//! a Navier-slip Navier–Stokes solver on the same domain, and the
//! measurement harness that compares the two.

pub mod cell;
pub mod diagnostics;
pub mod error;
pub mod euler;
pub mod expansion;
pub mod geometry;
pub mod halfplane;
pub mod harness;
pub mod linalg;
pub mod ns;
pub mod par;
pub mod quadrature;
pub mod spectral;

pub use error::{Error, Result};
pub use par::Exec;
