//! Rational delegation of quantum-circuit output estimation, simulated
//! at desk scale.
//!
//! The crate implements the sumcheck-style one-round estimation protocol
//! with its Brier-rule reward, the decision wrapper for promise problems,
//! the sparse-output variant, closed-form reward analysis, and the
//! meta-protocols that trade completeness-soundness gaps against reward
//! gaps. Exact brute-force oracles (statevector simulation and full path
//! enumeration) back every probabilistic component so the claimed bounds
//! are testable.

pub mod acceptance;
pub mod circuit;
pub mod client;
pub mod meta;
pub mod pathsum;
pub mod reward;
pub mod rng;
pub mod sampler;
pub mod server;

pub use circuit::{parse_circuit, Circuit, Gate, OutputDistribution, StateVector};
pub use client::{Decision, ProtocolReport, RewardRecord, SparseParams};
pub use rng::SeedTree;
