//! Proactive link-blockage prediction with a liquid time-constant recurrent
//! cell wired as a sparse neural circuit policy.
//!
//! The crate covers the whole experiment loop:
//!
//! * [`wiring`] — seeded generation and validation of the four-layer
//!   sensory → inter → command → motor synapse graph;
//! * [`ltc`] — the continuous-time cell, its fused semi-implicit solver and
//!   the trainable parameter set;
//! * [`train`] — binary cross-entropy, exact reverse-mode gradients through
//!   every solver step, a finite-difference oracle, Adam, and the epoch loop;
//! * [`sim`] — synthetic directional-link power traces with labeled blockage
//!   events and a controllable pre-blockage ripple signature;
//! * [`data`] — scenario CSV I/O, max-normalization, weak-beam exclusion and
//!   sliding-window sample extraction;
//! * [`eval`] — per-scenario/per-horizon accuracy with confusion counts and
//!   report emission;
//! * [`checkpoint`] — the canonical JSON model format.
//!
//! Every operation is deterministic given its explicit seeds; nothing reads
//! ambient randomness or clocks.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod ltc;
pub mod parallel;
pub mod reference;
pub mod sim;
pub mod train;
pub mod wiring;

pub use error::{Error, Result};
