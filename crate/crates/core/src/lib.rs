//! Finite-element solver and liner optimizer for the convected Helmholtz
//! equation in a cylindrical duct with a generalized Myers boundary condition.

pub mod admissibility;
pub mod assembly;
pub mod config;
pub mod energy;
pub mod error;
pub mod measure;
pub mod mesh;
pub mod optimize;
pub mod params;
pub mod problem;
pub mod solver;
pub mod sparse;
pub mod verify;

pub use error::{Error, Result};
pub use num_complex::Complex64;
