//! Simulation, exact likelihoods, and reconstruction for single-photon
//! avalanche diode (SPAD) event streams under a non-paralyzable dead time.

pub mod distributions;
pub mod error;
pub mod grid;
pub mod io;
pub mod likelihood;
pub mod reconstruction;
pub mod rng;
pub mod simulator;
pub mod verify;

pub use distributions::{Rate, Seconds};
pub use error::{Error, Result};
pub use grid::{FluxMap, Image};
