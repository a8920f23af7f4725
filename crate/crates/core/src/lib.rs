//! Simulation of ultrasound-powered optogenetic stimulation networks.
//!
//! Light delivery through tissue, energy harvesting, spike train generation,
//! the charge-and-fire and pattern-window scheduling protocols, a slot-based
//! engine with an auditable trace, and metrics and sweeps over all of it.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod energy;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod photonics;
pub mod protocols;
pub mod seed;
pub mod sim;
pub mod spikegen;
