pub mod config;
pub mod eigen;
pub mod error;
pub mod field;
pub mod fit;
pub mod fourier;
pub mod grid;
pub mod harness;
pub mod io;
pub mod limit;
pub mod modes;
pub mod norms;
pub mod poisson;
pub mod potential;
pub mod reference;
pub mod spectrum;
pub mod subband;

pub use error::{Error, Result};
