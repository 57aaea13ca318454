//! Lewis-Riesenfeld invariant of the Λ Hamiltonian and its eigenstates.
//!
//! For an angle trajectory `(γ(t), β(t))` and static phase `φ` the invariant is
//!
//! ```text
//! I(t) = (Ω₀/2) [ 0            cosγ sinβ         −i sinγ e^{−iφ}
//!                 cosγ sinβ    0                 cosγ cosβ e^{−iφ}
//!                 i sinγ e^{iφ} cosγ cosβ e^{iφ}  0               ]
//! ```
//!
//! with eigenvalues `0, ±Ω₀/2` (ħ = 1). The zero-eigenvalue state `|φ₀(t)⟩`
//! carries no Lewis-Riesenfeld phase, so a system prepared in `|φ₀(0)⟩`
//! follows `|φ₀(t)⟩` exactly whenever the pulses satisfy the consistency
//! relations between `(Ω_p, Ω_s)` and `(γ̇, β̇)`.

use num_complex::Complex64;
use std::f64::consts::{FRAC_1_SQRT_2, TAU};
use std::sync::Arc;

use crate::pulse::PulsePair;
use crate::quantum::{HamiltonianSample, Matrix3c, ThreeLevelState, Vector3c};
use crate::{Error, Result};

/// Time-dependent mixing angles with analytic derivatives.
pub trait AngleTrajectory: Send + Sync {
    fn gamma(&self, t: f64) -> f64;
    fn beta(&self, t: f64) -> f64;
    fn gamma_dot(&self, t: f64) -> f64;
    fn beta_dot(&self, t: f64) -> f64;
    /// Static phase `φ` of the Stokes field.
    fn phase(&self) -> f64;
    /// Duration `t_f` in μs.
    fn duration(&self) -> f64;
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Trajectory assembled from closures, for hand-built or perturbed paths.
#[derive(Clone)]
pub struct FnTrajectory {
    gamma: ScalarFn,
    gamma_dot: ScalarFn,
    beta: ScalarFn,
    beta_dot: ScalarFn,
    phase: f64,
    duration: f64,
}

impl FnTrajectory {
    pub fn new(
        duration: f64,
        phase: f64,
        gamma: impl Fn(f64) -> f64 + Send + Sync + 'static,
        gamma_dot: impl Fn(f64) -> f64 + Send + Sync + 'static,
        beta: impl Fn(f64) -> f64 + Send + Sync + 'static,
        beta_dot: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            gamma: Arc::new(gamma),
            gamma_dot: Arc::new(gamma_dot),
            beta: Arc::new(beta),
            beta_dot: Arc::new(beta_dot),
            phase,
            duration,
        }
    }

    /// Time-independent angles.
    pub fn constant(duration: f64, phase: f64, gamma: f64, beta: f64) -> Self {
        Self::new(
            duration,
            phase,
            move |_| gamma,
            |_| 0.0,
            move |_| beta,
            |_| 0.0,
        )
    }
}

impl AngleTrajectory for FnTrajectory {
    fn gamma(&self, t: f64) -> f64 {
        (self.gamma)(t)
    }
    fn beta(&self, t: f64) -> f64 {
        (self.beta)(t)
    }
    fn gamma_dot(&self, t: f64) -> f64 {
        (self.gamma_dot)(t)
    }
    fn beta_dot(&self, t: f64) -> f64 {
        (self.beta_dot)(t)
    }
    fn phase(&self) -> f64 {
        self.phase
    }
    fn duration(&self) -> f64 {
        self.duration
    }
}

/// Eigenvalue branch of the invariant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Zero,
    Plus,
    Minus,
}

/// Eigenvectors of `I(t)` for eigenvalues `0`, `+Ω₀/2`, `−Ω₀/2`.
#[derive(Clone, Copy, Debug)]
pub struct Eigenstates {
    pub zero: Vector3c,
    pub plus: Vector3c,
    pub minus: Vector3c,
}

impl Eigenstates {
    pub fn get(&self, branch: Branch) -> &Vector3c {
        match branch {
            Branch::Zero => &self.zero,
            Branch::Plus => &self.plus,
            Branch::Minus => &self.minus,
        }
    }
}

/// Angles and rates at one instant.
#[derive(Clone, Copy, Debug)]
struct Angles {
    gamma: f64,
    beta: f64,
    gamma_dot: f64,
    beta_dot: f64,
    phase: f64,
}

impl Angles {
    fn at(trajectory: &dyn AngleTrajectory, t: f64) -> Self {
        Self {
            gamma: trajectory.gamma(t),
            beta: trajectory.beta(t),
            gamma_dot: trajectory.gamma_dot(t),
            beta_dot: trajectory.beta_dot(t),
            phase: trajectory.phase(),
        }
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `|φ₀⟩ = (cosγ cosβ, −i sinγ, −cosγ sinβ e^{iφ})`.
fn zero_state(gamma: f64, beta: f64, phase: f64) -> Vector3c {
    let (sg, cg) = gamma.sin_cos();
    let (sb, cb) = beta.sin_cos();
    Vector3c::new(
        c(cg * cb, 0.0),
        c(0.0, -sg),
        Complex64::from_polar(-cg * sb, phase),
    )
}

/// `|φ±⟩ = (sinγ cosβ ± i sinβ, i cosγ, (−sinγ sinβ ± i cosβ) e^{iφ}) / √2`.
fn side_state(gamma: f64, beta: f64, phase: f64, sign: f64) -> Vector3c {
    let (sg, cg) = gamma.sin_cos();
    let (sb, cb) = beta.sin_cos();
    let e = Complex64::from_polar(1.0, phase);
    Vector3c::new(
        c(sg * cb, sign * sb),
        c(0.0, cg),
        c(-sg * sb, sign * cb) * e,
    ) * c(FRAC_1_SQRT_2, 0.0)
}

fn eigenvector(branch: Branch, a: &Angles) -> Vector3c {
    match branch {
        Branch::Zero => zero_state(a.gamma, a.beta, a.phase),
        Branch::Plus => side_state(a.gamma, a.beta, a.phase, 1.0),
        Branch::Minus => side_state(a.gamma, a.beta, a.phase, -1.0),
    }
}

/// Time derivative of an eigenvector by the chain rule in `γ` and `β`.
fn eigenvector_rate(branch: Branch, a: &Angles) -> Vector3c {
    let (sg, cg) = a.gamma.sin_cos();
    let (sb, cb) = a.beta.sin_cos();
    let e = Complex64::from_polar(1.0, a.phase);
    let (d_gamma, d_beta) = match branch {
        Branch::Zero => (
            Vector3c::new(c(-sg * cb, 0.0), c(0.0, -cg), e * (sg * sb)),
            Vector3c::new(c(-cg * sb, 0.0), c(0.0, 0.0), e * (-cg * cb)),
        ),
        Branch::Plus | Branch::Minus => {
            let sign = if branch == Branch::Plus { 1.0 } else { -1.0 };
            let k = c(FRAC_1_SQRT_2, 0.0);
            (
                Vector3c::new(c(cg * cb, 0.0), c(0.0, -sg), e * (-cg * sb)) * k,
                Vector3c::new(
                    c(-sg * sb, sign * cb),
                    c(0.0, 0.0),
                    c(-sg * cb, -sign * sb) * e,
                ) * k,
            )
        }
    };
    d_gamma * c(a.gamma_dot, 0.0) + d_beta * c(a.beta_dot, 0.0)
}

/// The bracketed shape of `I(t)` (without the `Ω₀/2` prefactor).
fn invariant_shape(gamma: f64, beta: f64, phase: f64) -> Matrix3c {
    let (sg, cg) = gamma.sin_cos();
    let (sb, cb) = beta.sin_cos();
    let em = Complex64::from_polar(1.0, -phase);
    let ep = em.conj();
    let zero = c(0.0, 0.0);
    Matrix3c::new(
        zero,
        c(cg * sb, 0.0),
        c(0.0, -sg) * em,
        c(cg * sb, 0.0),
        zero,
        em * (cg * cb),
        c(0.0, sg) * ep,
        ep * (cg * cb),
        zero,
    )
}

/// `d/dt` of [`invariant_shape`] along the trajectory.
fn invariant_shape_rate(a: &Angles) -> Matrix3c {
    let (sg, cg) = a.gamma.sin_cos();
    let (sb, cb) = a.beta.sin_cos();
    let em = Complex64::from_polar(1.0, -a.phase);
    let ep = em.conj();
    let zero = c(0.0, 0.0);
    let d_gamma = Matrix3c::new(
        zero,
        c(-sg * sb, 0.0),
        c(0.0, -cg) * em,
        c(-sg * sb, 0.0),
        zero,
        em * (-sg * cb),
        c(0.0, cg) * ep,
        ep * (-sg * cb),
        zero,
    );
    let d_beta = Matrix3c::new(
        zero,
        c(cg * cb, 0.0),
        zero,
        c(cg * cb, 0.0),
        zero,
        em * (-cg * sb),
        zero,
        ep * (-cg * sb),
        zero,
    );
    d_gamma * c(a.gamma_dot, 0.0) + d_beta * c(a.beta_dot, 0.0)
}

/// `|φ₀(t)⟩` of a trajectory as a state.
pub fn zero_eigenstate(trajectory: &dyn AngleTrajectory, t: f64) -> ThreeLevelState {
    ThreeLevelState::from_vector(&zero_state(
        trajectory.gamma(t),
        trajectory.beta(t),
        trajectory.phase(),
    ))
}

/// Invariant `I(t)` for a trajectory with scale `Ω₀`.
pub struct InvariantSpec<T> {
    omega0: f64,
    trajectory: T,
}

/// Default `Ω₀` in rad/μs; only ratios to it matter.
pub const DEFAULT_OMEGA0: f64 = TAU;

impl<T: AngleTrajectory> InvariantSpec<T> {
    pub fn new(omega0: f64, trajectory: T) -> Result<Self> {
        if !(omega0 > 0.0 && omega0.is_finite()) {
            return Err(Error::validation(
                "omega0",
                "must be a positive finite frequency",
            ));
        }
        Ok(Self { omega0, trajectory })
    }

    pub fn with_default_scale(trajectory: T) -> Self {
        Self {
            omega0: DEFAULT_OMEGA0,
            trajectory,
        }
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn trajectory(&self) -> &T {
        &self.trajectory
    }

    fn angles(&self, t: f64) -> Result<Angles> {
        let tf = self.trajectory.duration();
        let slack = 1e-12 * tf.max(1.0);
        if !(t >= -slack && t <= tf + slack) {
            return Err(Error::Domain { t, tf });
        }
        Ok(Angles::at(&self.trajectory, t))
    }

    /// `I(t)` (ħ = 1).
    pub fn matrix(&self, t: f64) -> Result<Matrix3c> {
        let a = self.angles(t)?;
        Ok(invariant_shape(a.gamma, a.beta, a.phase) * c(self.omega0 / 2.0, 0.0))
    }

    pub fn eigenstates(&self, t: f64) -> Result<Eigenstates> {
        let a = self.angles(t)?;
        Ok(Eigenstates {
            zero: eigenvector(Branch::Zero, &a),
            plus: eigenvector(Branch::Plus, &a),
            minus: eigenvector(Branch::Minus, &a),
        })
    }

    pub fn eigenvalue(&self, branch: Branch) -> f64 {
        match branch {
            Branch::Zero => 0.0,
            Branch::Plus => self.omega0 / 2.0,
            Branch::Minus => -self.omega0 / 2.0,
        }
    }

    /// Frobenius norm of `∂I/∂t − i[I, H]` with `H` assembled from `pulses` at Δ = 0.
    ///
    /// `∂I/∂t` is analytic in `γ̇`, `β̇`; the result vanishes when the pulses
    /// realize this trajectory.
    pub fn invariance_residual(&self, pulses: &PulsePair, t: f64) -> Result<f64> {
        let a = self.angles(t)?;
        let scale = c(self.omega0 / 2.0, 0.0);
        let inv = invariant_shape(a.gamma, a.beta, a.phase) * scale;
        let d_inv = invariant_shape_rate(&a) * scale;
        let h = hamiltonian_at(pulses, t);
        let total = d_inv - (inv * h - h * inv) * c(0.0, 1.0);
        Ok(total.norm())
    }

    /// Integrand of the Lewis-Riesenfeld phase, `⟨φₙ|i∂ₜ − H|φₙ⟩`, in rad/μs.
    pub fn lr_phase_rate(&self, pulses: &PulsePair, t: f64, branch: Branch) -> Result<f64> {
        let a = self.angles(t)?;
        let v = eigenvector(branch, &a);
        let dv = eigenvector_rate(branch, &a);
        let h = hamiltonian_at(pulses, t);
        let kinetic = v.dotc(&dv) * c(0.0, 1.0);
        let potential = v.dotc(&(h * v));
        Ok((kinetic - potential).re)
    }
}

fn hamiltonian_at(pulses: &PulsePair, t: f64) -> Matrix3c {
    let (p, s) = pulses.eval(t);
    HamiltonianSample {
        omega_p: p,
        omega_s: s,
        phase: pulses.phase(),
        detuning: 0.0,
    }
    .assemble()
}
