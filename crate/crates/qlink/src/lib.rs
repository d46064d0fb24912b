//! Engineering toolkit for long-haul photonic quantum links.
//!
//! Three questions, three toolboxes:
//!
//! - [`linkbudget`] — how far direct transmission reaches: dB loss
//!   arithmetic, detection rates, maximum-distance inversion and the
//!   device-independent detection-efficiency gate.
//! - [`amplifier`] — heralded amplification of the presence amplitude of a
//!   photonic qubit: exact teleportation branches, gain and Poincaré-sphere
//!   maps, a brute-force optical-circuit oracle, detector imperfections and
//!   Monte Carlo herald statistics.
//! - [`repeater`] — entanglement distribution over a chain of elementary
//!   links with quantum memories: slot-stepped simulation and closed-form
//!   waiting-time references.
//!
//! [`fock`] supplies the shared bosonic state engine; [`cli`] exposes
//! everything as the `qlink` command-line tool.

pub mod amplifier;
pub mod cli;
pub mod fock;
pub mod linkbudget;
pub mod repeater;
