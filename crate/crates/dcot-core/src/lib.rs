//! Dynamic chain-of-thought (D-CoT) reasoning engine.
//!
//! The crate hosts the algorithmic core: configuration and deterministic RNG,
//! a tiny mixture-of-experts transformer backend (plus a scripted oracle
//! backend), the reasoning discriminator, the pruning/buffering controller,
//! the hierarchical reward optimizer, the feedback decoder that drives a full
//! session, hierarchical chain assembly, and exact rational task oracles.
//!
//! Everything here is `no_std` (with `alloc`); file formats, the CLI, and the
//! benchmark harness live in the companion `dcot-cli` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod assembly;
pub mod config;
pub mod controller;
pub mod decoder;
pub mod discriminator;
pub mod haro;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod scripted;
pub mod trace;
pub mod vocab;

pub use config::{ConfigError, DCoTConfig};
pub use rng::SplitMix64;
pub use trace::{Mode, SessionTrace};
