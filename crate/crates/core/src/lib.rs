//! Quasifree Lindblad dynamics with a self-consistent Hartree potential.

pub mod cli_io;
pub mod error;
pub mod fock_oracle;
pub mod grid;
pub mod hartree;
pub mod model;
pub mod propagator;
pub mod states;

pub use error::{Error, Result};
