//! State vectors, Hamiltonian assembly, fidelity and Bloch-vector mapping.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::{Error, Result};

pub type Matrix3c = Matrix3<Complex64>;
pub type Vector3c = Vector3<Complex64>;

/// Largest `|‖ψ‖² − 1|` accepted by operations that require a normalized state.
pub const NORM_TOLERANCE: f64 = 1e-6;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Amplitudes `(C₁, C_e, C₀)` of the three-level state in basis `(|1⟩, |e⟩, |0⟩)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThreeLevelState {
    pub c1: Complex64,
    pub ce: Complex64,
    pub c0: Complex64,
}

impl ThreeLevelState {
    /// Raw amplitudes, no normalization.
    pub const fn new(c1: Complex64, ce: Complex64, c0: Complex64) -> Self {
        Self { c1, ce, c0 }
    }

    /// Rescales the amplitudes to unit norm.
    pub fn normalized(c1: Complex64, ce: Complex64, c0: Complex64) -> Result<Self> {
        let norm = (c1.norm_sqr() + ce.norm_sqr() + c0.norm_sqr()).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::validation(
                "state",
                "amplitudes have zero or non-finite norm",
            ));
        }
        Ok(Self::new(c1 / norm, ce / norm, c0 / norm))
    }

    pub const fn one() -> Self {
        Self::new(ONE, ZERO, ZERO)
    }

    pub const fn excited() -> Self {
        Self::new(ZERO, ONE, ZERO)
    }

    pub const fn zero() -> Self {
        Self::new(ZERO, ZERO, ONE)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.c1.norm_sqr() + self.ce.norm_sqr() + self.c0.norm_sqr()
    }

    /// Populations `[P₁, P_e, P₀]`.
    pub fn populations(&self) -> [f64; 3] {
        [self.c1.norm_sqr(), self.ce.norm_sqr(), self.c0.norm_sqr()]
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.c1.conj() * other.c1 + self.ce.conj() * other.ce + self.c0.conj() * other.c0
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self::new(self.c1 * factor, self.ce * factor, self.c0 * factor)
    }

    pub fn to_vector(&self) -> Vector3c {
        Vector3c::new(self.c1, self.ce, self.c0)
    }

    pub fn from_vector(v: &Vector3c) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn ensure_normalized(&self) -> Result<()> {
        let drift = (self.norm_sqr() - 1.0).abs();
        if drift > NORM_TOLERANCE || drift.is_nan() {
            return Err(Error::validation(
                "state",
                format!("norm² deviates from 1 by {drift:.3e}"),
            ));
        }
        Ok(())
    }
}

/// Ground-space superposition `cosθ|1⟩ + sinθ e^{iφ}|0⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub theta: f64,
    pub phi: f64,
}

impl TargetState {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        let target = Self { theta, phi };
        target.validate()?;
        Ok(target)
    }

    /// The equal superposition `(|1⟩ + i|0⟩)/√2` used for all the worked examples.
    pub fn equal_superposition() -> Self {
        Self {
            theta: std::f64::consts::FRAC_PI_4,
            phi: std::f64::consts::FRAC_PI_2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("target.theta", self.theta), ("target.phi", self.phi)] {
            if !(0.0..=TAU).contains(&value) {
                return Err(Error::validation(
                    name,
                    format!("{value} is outside [0, 2π]"),
                ));
            }
        }
        Ok(())
    }

    /// Embedding into the three-level space with zero `|e⟩` amplitude.
    pub fn embed(&self) -> ThreeLevelState {
        ThreeLevelState::new(
            Complex64::new(self.theta.cos(), 0.0),
            ZERO,
            Complex64::from_polar(self.theta.sin(), self.phi),
        )
    }
}

/// `|⟨target|state⟩|²` against a superposition target.
pub fn fidelity(state: &ThreeLevelState, target: &TargetState) -> Result<f64> {
    overlap_fidelity(state, &target.embed())
}

/// `|⟨target|state⟩|²` against an arbitrary three-level target.
pub fn overlap_fidelity(state: &ThreeLevelState, target: &ThreeLevelState) -> Result<f64> {
    state.ensure_normalized()?;
    target.ensure_normalized()?;
    Ok(target.inner(state).norm_sqr().min(1.0))
}

/// Bloch coordinates of the `{|1⟩, |e⟩}` pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlochVector {
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

impl BlochVector {
    pub fn norm(&self) -> f64 {
        (self.u * self.u + self.v * self.v + self.w * self.w).sqrt()
    }
}

/// Maps `(C₁, C_e)` to `u = 2Re(C₁C_e*)`, `v = 2Im(C₁C_e*)`, `w = |C₁|² − |C_e|²`.
pub fn bloch_vector(state: &ThreeLevelState) -> BlochVector {
    let coherence = state.c1 * state.ce.conj();
    BlochVector {
        u: 2.0 * coherence.re,
        v: 2.0 * coherence.im,
        w: state.c1.norm_sqr() - state.ce.norm_sqr(),
    }
}

/// Instantaneous drive parameters, all angular (rad/μs).
///
/// The couplings are complex so that phase-modulated (chirped) envelopes use
/// the same Hamiltonian; the shortcut pulses are real.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HamiltonianSample {
    pub omega_p: Complex64,
    pub omega_s: Complex64,
    pub phase: f64,
    pub detuning: f64,
}

impl HamiltonianSample {
    pub fn real(omega_p: f64, omega_s: f64, phase: f64, detuning: f64) -> Self {
        Self {
            omega_p: Complex64::new(omega_p, 0.0),
            omega_s: Complex64::new(omega_s, 0.0),
            phase,
            detuning,
        }
    }

    /// `H/ħ = ½[[0, Ω_p*, 0], [Ω_p, 2Δ, Ω_s e^{−iφ}], [0, (Ω_s e^{−iφ})*, 0]]`.
    pub fn assemble(&self) -> Matrix3c {
        let half = 0.5;
        let pump = self.omega_p * half;
        let stokes = self.omega_s * Complex64::from_polar(1.0, -self.phase) * half;
        Matrix3c::new(
            ZERO,
            pump.conj(),
            ZERO,
            pump,
            Complex64::new(self.detuning, 0.0),
            stokes,
            ZERO,
            stokes.conj(),
            ZERO,
        )
    }
}

pub fn assemble_hamiltonian(sample: &HamiltonianSample) -> Matrix3c {
    sample.assemble()
}
