//! Randomized-measurement toolkit for two-qubit local-unitary invariants.
//!
//! The crate covers the full chain from a known density matrix to a
//! statistically qualified certificate:
//!
//! * [`state`]: density matrices, Bloch coordinates, partial transposition.
//! * [`invariants`]: Makhlin invariants, CHSH value, fidelity bound, negativity.
//! * [`haar`]: Haar sampling and frame-potential randomness certification.
//! * [`moments`]: closed-form randomized-measurement moments and a Monte Carlo oracle.
//! * [`estimators`]: unbiased estimators on multinomial count tables.
//! * [`bounds`]: confidence intervals and region scans.
//! * [`pipeline`]: shot simulator and end-to-end analysis.
//! * [`formats`]: parsers for every file the CLI reads.
//!
//! Pauli order is (X, Y, Z) everywhere.

pub mod bounds;
pub mod error;
pub mod estimators;
pub mod formats;
pub mod haar;
pub mod invariants;
pub mod moments;
pub mod pauli;
pub mod pipeline;
pub mod poly;
pub mod state;

pub use error::{Error, Result};
