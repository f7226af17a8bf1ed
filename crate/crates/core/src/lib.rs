//! Deterministic smart-contract inference on a simulated chain.
//!
//! A byte-level toy language model ([`engine`]) sits behind a small
//! neural-network facade ([`nn`]). Contracts ([`runtime`]) call it through a
//! host environment that meters gas and writes to a key-value state
//! ([`chain`]). Several validators run the same transactions and vote on the
//! result ([`consensus`]).

pub mod chain;
pub mod consensus;
pub mod engine;
pub mod hash;
pub mod nn;
pub mod runtime;
