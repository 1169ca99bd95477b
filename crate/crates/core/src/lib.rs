//! Cavity field driven by a stream of two-level atoms prepared in a
//! superposition state: truncated Fock-space tools, master equations,
//! Monte Carlo trajectories, Gaussian moments and coupling-estimation error.

pub mod atom;
pub mod cli;
pub mod error;
pub mod fock;
pub mod gaussian;
pub mod lindblad;
pub mod metrology;
pub mod moments;
pub mod ode;
pub mod trajectory;

pub use error::{Error, Result};
