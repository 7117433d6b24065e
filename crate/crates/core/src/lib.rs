//! Quantum natural gradient optimization of single-mode photonic circuits
//! simulated in a truncated Fock space.

pub mod circuit;
pub mod error;
pub mod expm;
pub mod fock;
pub mod gates;
pub mod geometry;
pub mod gradcheck;
pub mod harness;
pub mod optim;
pub mod targets;

pub use error::{Error, Result};
pub use fock::C64;
