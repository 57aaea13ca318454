//! Shortcut-to-adiabaticity pulse design for a three-level Λ system.
//!
//! Pulses are inverse-engineered from the eigenstate `|φ₀(t)⟩` of a
//! Lewis-Riesenfeld invariant: an angle trajectory `(γ(t), β(t))` is chosen
//! first, and the pump/Stokes Rabi envelopes that drive the system exactly
//! along it follow in closed form. The crate also propagates the driven
//! Schrödinger equation under detuning and amplitude errors, sweeps fidelity
//! maps, and runs a coordinate scan over the ansatz coefficients.
//!
//! Conventions used throughout:
//!
//! * basis ordering `(|1⟩, |e⟩, |0⟩)`;
//! * time in μs;
//! * Rabi frequencies and detunings are angular (rad/μs) inside the library;
//!   user-facing values are ordinary frequencies in MHz, see [`units`];
//! * ħ = 1, so energies are angular frequencies.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod dynamics;
pub mod error;
pub mod invariant;
pub mod optimizer;
pub mod pulse;
pub mod quantum;
pub mod sweep;

pub use error::{Error, Result};

/// Conversions between ordinary (MHz) and angular (rad/μs) frequencies.
pub mod units {
    use std::f64::consts::TAU;

    pub fn mhz_to_angular(mhz: f64) -> f64 {
        TAU * mhz
    }

    pub fn angular_to_mhz(angular: f64) -> f64 {
        angular / TAU
    }

    /// One nanosecond in μs, the default integrator and export step.
    pub const NANOSECOND: f64 = 1e-3;
}
