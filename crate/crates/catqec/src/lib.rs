//! Cat-code quantum error correction: simulation and analysis.
//!
//! This crate models a bosonic cat qubit stabilised against single-photon
//! loss by repeated, adaptively scheduled parity measurements through a
//! dispersively coupled ancilla. It provides:
//!
//! - truncated Fock-space linear algebra and cat-state constructions
//!   ([`fock`]),
//! - Lindblad master-equation and quantum-trajectory solvers ([`dynamics`]),
//! - the four-component cat code: encoding, decoding, and logical frame
//!   bookkeeping ([`cat`]),
//! - the measurement controller: ancilla model, parity monitoring, and the
//!   full error-correction cycle ([`controller`]),
//! - closed-form analytics: fidelity gain, cadence optimisation, Bayesian
//!   record confidence, and the photon-budget ledger ([`analytics`]),
//! - process tomography and lifetime fitting ([`tomo`]),
//! - batch-run orchestration, config parsing, and archives ([`harness`]).

pub mod analytics;
pub mod cat;
pub mod controller;
pub mod dynamics;
pub mod fock;
pub mod harness;
pub mod tomo;

pub use dynamics::SystemParams;

/// Crate version string, exposed for the CLI and the C ABI.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
