//! Hybrid dynamical systems near periodic orbits.
//!
//! The crate provides, bottom-up:
//!
//! - [`system`]: immutable definitions of hybrid systems (domains with vector
//!   fields, guards with resets) and validation diagnostics;
//! - [`flow`]: fixed-step single-domain integration with bisection-refined
//!   guard-crossing detection and normalized-time sampling;
//! - [`exec`]: multi-domain execution alternating flow and resets, with Zeno
//!   and transition-count safeguards;
//! - [`poincare`]: Poincaré sections, return maps by direct execution,
//!   per-domain step maps, fixed-point search, and finite-difference
//!   Jacobians;
//! - [`spectral`]: eigenvalues, numerical rank, rank-of-iterates sweeps with
//!   invariant-subspace bases, constancy-of-rank probes, exact integer
//!   rank-identity oracles, and cross-section spectrum consistency;
//! - [`models`]: the bundled forced vertical hopper and a nilpotent-reset
//!   single-domain system with closed-form return map.

pub mod error;
pub mod exec;
pub mod flow;
pub mod models;
pub mod poincare;
pub mod spectral;
pub mod system;

pub use error::{Error, Result};
pub use exec::{execute, Execution, ExecutionArc, Limits, Termination};
pub use flow::{sample_normalized, step, time_to_impact, ImpactResult, Method, StepperConfig};
pub use system::{
    validate, Diagnostic, DiagnosticKind, DomainDef, GuardDef, HybridSystemDef,
    PeriodicOrbitResult, StateVec,
};
