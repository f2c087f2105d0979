//! Non-collapsed state modeling over dynamic signal graphs.
//!
//! The crate keeps an actor's situation as a time-indexed graph
//! ([`mpg::MpgSnapshot`]), maps it to a normalized complex state
//! ([`quantum::StateVector`]) and predicts the next state with a Hermitian
//! operator built from the graph. Persistent mismatches between prediction
//! and observation are localized by the divergence-weighted window operator
//! ([`divergence`]) and, once validated by ablation, suspend autonomous
//! inference until a human answers a single clarification question
//! ([`decoherence`]). Episodes are kept in an append-only log ([`memory`])
//! and can be compared across actors without exposing graph content
//! ([`collective`]). [`sim`] drives all of it from seeded scenarios.

pub mod collective;
pub mod decoherence;
pub mod divergence;
pub mod engine;
pub mod linalg;
pub mod memory;
pub mod mpg;
pub mod quantum;
pub mod sim;
