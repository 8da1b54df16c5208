//! Thermal-neutron Fourier-transform ghost imaging: forward simulation of
//! spin-resolved intensity correlations and reconstruction of the nuclear
//! and magnetic scattering densities of a sample.

pub mod cli;
pub mod correlator;
pub mod error;
pub mod fourier;
pub mod io;
pub mod phantom;
pub mod scene;
pub mod propagation;
pub mod reconstruct;
pub mod selftest;
pub mod spinor;

pub use error::{Error, Result};
