//! Simulation of a heralded zero/one-photon teleportation machine built from
//! lossy beam splitters and inefficient photodetectors.

pub mod analytic;
pub mod apparatus;
pub mod channels;
pub mod error;
pub mod fock;
pub mod report;

pub use error::{Error, Result};
