//! Simulation, tomography and pulse optimization for recoil-free
//! single-qubit gates on trapped atoms.

pub mod bfgs;
pub mod composite;
pub mod error;
pub mod linalg;
pub mod model;
pub mod optimizer;
pub mod oracles;
pub mod perturbation;
pub mod propagator;
pub mod pulse;
pub mod rb;
pub mod stats;
pub mod tomography;

pub use error::{Error, Result};
