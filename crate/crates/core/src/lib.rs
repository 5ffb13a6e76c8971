//! Desk-scale toolkit for analyzing syndrome-based key distillation with
//! CNOT circuits and noisy processing.
//!
//! The crate is organized around six subsystems:
//!
//! - [`gf2`]: bit-packed vectors, matrices, codes, and Hamming balls over GF(2);
//! - [`cnot`]: synthesis of CNOT gate lists realizing invertible GF(2) maps,
//!   plus the syndrome-extraction and hashing/privacy-amplification circuits;
//! - [`qsim`]: exact dense statevector and Hermitian-operator engine for up
//!   to 14 qubits;
//! - [`protocol`]: executable models of the actual and virtual key-distillation
//!   protocols, candidate-set constructions, and the equivalence harness;
//! - [`pgm`]: pretty-good-measurement discrimination of phase-error patterns
//!   recorded in shield states, typical-subspace projectors, and the failure
//!   bounds with their diagnostics;
//! - [`rates`]: entropies, key-generation-rate formulas, and bit-error-rate
//!   threshold solvers.

pub mod cnot;
pub mod gf2;
pub mod pgm;
pub mod protocol;
pub mod qsim;
pub mod rates;
pub mod rng;
