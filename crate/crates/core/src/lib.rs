//! Offline symbolic text classification built on Tsetlin machines.
//!
//! The crate covers the whole training path: tokenization and bag-of-words
//! binarization ([`corpus`]), a standard Tsetlin machine with positive and
//! negated literals ([`tm`]), a monotone (non-negated) variant that learns
//! per-sub-intent keyword clauses from generated text ([`ntm`]), staged
//! synthetic sample generation against a pluggable completion provider
//! ([`bootstrap`]), injection of the learned keyword groups into real
//! feature vectors ([`enrich`]), and an end-to-end pipeline with versioned
//! artifacts ([`pipeline`]).
//!
//! Everything is deterministic under explicit u64 seeds; no network or
//! wall-clock input touches a model unless the optional `live` provider
//! feature is enabled and configured.

pub mod bootstrap;
pub mod corpus;
pub mod enrich;
pub mod eval;
pub mod model_io;
pub mod ntm;
pub mod pipeline;
pub mod rng;
pub mod tm;
