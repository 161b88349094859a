//! Spectral and scattering toolkit for the Hodge Laplacian on 1-forms over
//! asymptotically Euclidean metrics on `R^n`.

pub mod analysis;
pub mod assembly;
pub mod blocks;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod metric;
pub mod scattering;
pub mod sparse;
pub mod spectral;
pub mod tensor;

pub use error::{Error, Result};
