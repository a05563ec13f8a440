//! Minimal-residual finite element discretizations of the ultra-weak
//! first-order Poisson system on the unit square.

pub mod adapt;
pub mod analysis;
pub mod assembly;
pub mod config;
pub mod error;
pub mod experiment;
pub mod fespace;
pub mod mesh;
pub mod problem;
pub mod quadrature;
pub mod solve;

pub use error::{Error, Result};
