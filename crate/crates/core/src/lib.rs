//! Vacuum-triggered photon emission from a two-level emitter ultrastrongly
//! coupled to a finite-band cavity array.
//!
//! - [`model`]: parameters, dispersion, local Hamiltonian terms and an exact
//!   diagonalization oracle for small chains.
//! - [`polaron`]: self-consistent polaron ansatz and its excitation-number
//!   sectors.
//! - [`mps`]: parity-graded matrix product states, TEBD and contractions.
//! - [`spectrum`]: parity-resolved eigenstate search by imaginary time.
//! - [`quench`]: coupling and detuning quenches with channel observables.
//! - [`cli`]: configuration, orchestration and file output for the `vq` tool.

pub mod error;
pub mod linalg;
pub mod model;
pub mod mps;
pub mod polaron;
pub mod quench;
pub mod spectrum;
pub mod cli;

pub use error::{Error, Result};
