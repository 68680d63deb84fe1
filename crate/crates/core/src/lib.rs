//! Thermal noise analysis of switched-capacitor circuits.
//!
//! The analytic path extracts per-phase equivalent capacitances of
//! capacitor-only networks, evaluates the extended Bode theorem at each
//! sampling port, and propagates the sampled noise charges through the
//! clock periods. The Monte-Carlo path integrates the linear stochastic
//! circuit equations phase by phase and serves as an independent check.

#![no_std]

extern crate alloc;

pub mod bode;
pub mod capnet;
pub mod circuit;
pub mod compare;
pub mod linalg;
pub mod mcsim;
pub mod plan;
pub mod stage;

/// Boltzmann constant in J/K.
pub const K_B: f64 = 1.380649e-23;

pub use bode::{BodeCaps, BodeError, Variance};
pub use capnet::{CapError, CapMatrix, ChargeState, ExtCap};
pub use circuit::{Circuit, CircuitBuilder, CircuitError, NodeId, PhaseId, PhaseView};
pub use mcsim::{McConfig, McError, TraceEnsemble};
pub use plan::{Injection, NoisePlan, NoiseReport, PlanError, Recursion};
