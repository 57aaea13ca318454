//! Ansatz trajectories, constraint solving and Rabi-envelope synthesis.
//!
//! The mixing angle follows a linear ramp plus a sine series,
//! `γ(t) = ramp(t) + Σₙ aₙ sin(nπt/t_f)`, and for the three-level tasks
//! `β(t) = ((π−θ)/2)(1 − cosγ(t))`. Requiring `γ̇(0) = γ̇(t_f) = 0` (pulses
//! that start and end at zero) pins one linear combination of the odd and one
//! of the even coefficients; see [`TaskKind::even_constraint`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{self, Write};
use std::sync::Arc;

use crate::invariant::AngleTrajectory;
use crate::quantum::{TargetState, ThreeLevelState};
use crate::units::angular_to_mhz;
use crate::{Error, Result};

/// Tolerance on the coefficient constraints.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-12;

/// Default number of even/odd coefficient pairs (`a₁…a₈`).
pub const DEFAULT_ORDER: usize = 4;

/// The three operation tasks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    /// `|1⟩ → cosθ|1⟩ + sinθ e^{iφ}|0⟩`.
    CreateAsqs,
    /// `|1⟩ → i|e⟩` with the Stokes field off.
    TwoLevelTransfer,
    /// `cosθ|1⟩ + sinθ e^{iφ}|0⟩ → |1⟩`.
    ReturnToOne,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [
        TaskKind::CreateAsqs,
        TaskKind::TwoLevelTransfer,
        TaskKind::ReturnToOne,
    ];

    /// Required value of `a₂ + 2a₄ + 3a₆ + … + k·a₂ₖ`.
    pub fn even_constraint(self) -> f64 {
        match self {
            TaskKind::CreateAsqs => -0.5,
            TaskKind::TwoLevelTransfer => 0.25,
            TaskKind::ReturnToOne => 0.5,
        }
    }

    /// Linear part of `γ(t)` and its slope.
    fn ramp(self, t: f64, tf: f64) -> (f64, f64) {
        match self {
            TaskKind::CreateAsqs => (PI * t / tf, PI / tf),
            TaskKind::TwoLevelTransfer => (-PI * t / (2.0 * tf), -PI / (2.0 * tf)),
            TaskKind::ReturnToOne => (PI - PI * t / tf, -PI / tf),
        }
    }

    pub fn is_two_level(self) -> bool {
        self == TaskKind::TwoLevelTransfer
    }

    /// State the task starts from, given the superposition end of the task.
    pub fn initial_state(self, superposition: &TargetState) -> ThreeLevelState {
        match self {
            TaskKind::CreateAsqs | TaskKind::TwoLevelTransfer => ThreeLevelState::one(),
            TaskKind::ReturnToOne => superposition.embed(),
        }
    }

    /// State the task should reach.
    pub fn final_state(self, superposition: &TargetState) -> ThreeLevelState {
        match self {
            TaskKind::CreateAsqs => superposition.embed(),
            TaskKind::TwoLevelTransfer => ThreeLevelState::excited().scale(Complex64::i()),
            TaskKind::ReturnToOne => ThreeLevelState::one(),
        }
    }
}

/// Ansatz coefficients `a₁…a₂ₖ` with the task they belong to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseCoefficients {
    pub task: TaskKind,
    /// `a[n-1]` holds `aₙ`.
    pub a: Vec<f64>,
    /// Pulse duration in μs.
    pub tf: f64,
    /// Superposition end of the task (θ_a, φ_a or θ_b, φ_b).
    pub target: TargetState,
}

impl PulseCoefficients {
    pub fn new(task: TaskKind, a: Vec<f64>, tf: f64, target: TargetState) -> Result<Self> {
        let coeffs = Self {
            task,
            a,
            tf,
            target,
        };
        coeffs.validate()?;
        Ok(coeffs)
    }

    /// `k = 4` coefficients with odd terms zero and `a₄` solved from the constraint.
    pub fn from_even(
        task: TaskKind,
        a2: f64,
        a6: f64,
        a8: f64,
        tf: f64,
        target: TargetState,
    ) -> Result<Self> {
        let partial = [None, Some(a2), None, None, None, Some(a6), None, Some(a8)];
        solve_constraint(task, &partial, tf, target)
    }

    /// `aₙ` (1-based); zero beyond the stored order.
    pub fn get(&self, n: usize) -> f64 {
        n.checked_sub(1)
            .and_then(|i| self.a.get(i))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn order(&self) -> usize {
        self.a.len() / 2
    }

    pub fn odd_sum(&self) -> f64 {
        self.a
            .iter()
            .step_by(2)
            .enumerate()
            .map(|(j, a)| (2 * j + 1) as f64 * a)
            .sum()
    }

    pub fn even_sum(&self) -> f64 {
        self.a
            .iter()
            .skip(1)
            .step_by(2)
            .enumerate()
            .map(|(j, a)| (j + 1) as f64 * a)
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.is_empty() || !self.a.len().is_multiple_of(2) {
            return Err(Error::validation(
                "coefficients",
                format!(
                    "need an even number of coefficients a1..a2k, got {}",
                    self.a.len()
                ),
            ));
        }
        if let Some(n) = self.a.iter().position(|a| !a.is_finite()) {
            return Err(Error::validation(format!("a{}", n + 1), "must be finite"));
        }
        if !(self.tf > 0.0 && self.tf.is_finite()) {
            return Err(Error::validation("tf", "pulse duration must be positive"));
        }
        self.target.validate()?;
        let odd = self.odd_sum();
        if odd.abs() > CONSTRAINT_TOLERANCE {
            return Err(Error::validation(
                "coefficients",
                format!("odd constraint a1 + 3a3 + 5a5 + ... = 0 violated (sum is {odd})"),
            ));
        }
        let even = self.even_sum();
        let required = self.task.even_constraint();
        if (even - required).abs() > CONSTRAINT_TOLERANCE {
            return Err(Error::validation(
                "coefficients",
                format!(
                    "even constraint a2 + 2a4 + 3a6 + ... = {required} violated (sum is {even})"
                ),
            ));
        }
        Ok(())
    }
}

/// Fills in the single unassigned even coefficient so the task constraints hold.
///
/// `partial[n-1]` is `aₙ`; unassigned odd entries are taken as zero.
pub fn solve_constraint(
    task: TaskKind,
    partial: &[Option<f64>],
    tf: f64,
    target: TargetState,
) -> Result<PulseCoefficients> {
    if partial.is_empty() || !partial.len().is_multiple_of(2) {
        return Err(Error::validation(
            "coefficients",
            format!(
                "need an even number of slots a1..a2k, got {}",
                partial.len()
            ),
        ));
    }
    let open: Vec<usize> = (1..partial.len())
        .step_by(2)
        .filter(|&i| partial[i].is_none())
        .collect();
    let slot = match open.as_slice() {
        [slot] => *slot,
        [] => {
            return Err(Error::validation(
                "coefficients",
                "over-determined: every even coefficient is assigned, leave one open",
            ))
        }
        _ => {
            return Err(Error::validation(
                "coefficients",
                format!(
                    "under-determined: {} even coefficients left open, expected one",
                    open.len()
                ),
            ))
        }
    };
    let mut a: Vec<f64> = partial.iter().map(|v| v.unwrap_or(0.0)).collect();
    a[slot] = 0.0;
    let weight = slot.div_ceil(2) as f64;
    let rest: f64 = a
        .iter()
        .skip(1)
        .step_by(2)
        .enumerate()
        .map(|(j, v)| (j + 1) as f64 * v)
        .sum();
    a[slot] = (task.even_constraint() - rest) / weight;
    PulseCoefficients::new(task, a, tf, target)
}

/// The coefficients tuned by the sweeps and the coordinate scan; `a₄` is
/// always re-solved from the constraint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FreeCoefficient {
    A2,
    A6,
    A8,
}

impl FreeCoefficient {
    /// 1-based index `n` of `aₙ`.
    pub fn index(self) -> usize {
        match self {
            FreeCoefficient::A2 => 2,
            FreeCoefficient::A6 => 6,
            FreeCoefficient::A8 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FreeCoefficient::A2 => "a2",
            FreeCoefficient::A6 => "a6",
            FreeCoefficient::A8 => "a8",
        }
    }
}

/// `(a₂, a₆, a₈)` with odd terms zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvenCoefficients {
    pub a2: f64,
    pub a6: f64,
    pub a8: f64,
}

impl EvenCoefficients {
    pub fn new(a2: f64, a6: f64, a8: f64) -> Self {
        Self { a2, a6, a8 }
    }

    pub fn get(&self, which: FreeCoefficient) -> f64 {
        match which {
            FreeCoefficient::A2 => self.a2,
            FreeCoefficient::A6 => self.a6,
            FreeCoefficient::A8 => self.a8,
        }
    }

    pub fn with(mut self, which: FreeCoefficient, value: f64) -> Self {
        match which {
            FreeCoefficient::A2 => self.a2 = value,
            FreeCoefficient::A6 => self.a6 = value,
            FreeCoefficient::A8 => self.a8 = value,
        }
        self
    }

    pub fn solve(&self, task: TaskKind, tf: f64, target: TargetState) -> Result<PulseCoefficients> {
        PulseCoefficients::from_even(task, self.a2, self.a6, self.a8, tf, target)
    }
}

/// `(γ, β)` trajectory of the ansatz for a coefficient set.
#[derive(Clone, Debug)]
pub struct AnsatzTrajectory {
    task: TaskKind,
    a: Vec<f64>,
    tf: f64,
    /// `(π − θ)/2`, zero for the two-level task.
    beta_scale: f64,
    phase: f64,
}

impl AnsatzTrajectory {
    pub fn task(&self) -> TaskKind {
        self.task
    }

    /// `(Σ aₙ sin(nπt/t_f), Σ aₙ (nπ/t_f) cos(nπt/t_f))` by complex-power recurrence.
    fn series(&self, t: f64) -> (f64, f64) {
        let step = Complex64::from_polar(1.0, PI * t / self.tf);
        let mut z = step;
        let (mut value, mut rate) = (0.0, 0.0);
        for (i, &a) in self.a.iter().enumerate() {
            value += a * z.im;
            rate += a * (i + 1) as f64 * z.re;
            z *= step;
        }
        (value, rate * PI / self.tf)
    }

    /// `(γ, γ̇)` in one pass.
    pub fn gamma_and_rate(&self, t: f64) -> (f64, f64) {
        let (ramp, slope) = self.task.ramp(t, self.tf);
        let (value, rate) = self.series(t);
        (ramp + value, slope + rate)
    }

    /// Simplified closed-form envelopes `(Ω_p, Ω_s)` in rad/μs.
    pub fn envelopes(&self, t: f64) -> (f64, f64) {
        let (gamma, gamma_dot) = self.gamma_and_rate(t);
        if self.task.is_two_level() {
            return (2.0 * gamma_dot, 0.0);
        }
        let cg = gamma.cos();
        let beta = self.beta_scale * (1.0 - cg);
        let (sb, cb) = beta.sin_cos();
        let k = 2.0 * self.beta_scale;
        (
            gamma_dot * (k * cg * sb + 2.0 * cb),
            gamma_dot * (k * cg * cb - 2.0 * sb),
        )
    }
}

impl AngleTrajectory for AnsatzTrajectory {
    fn gamma(&self, t: f64) -> f64 {
        self.gamma_and_rate(t).0
    }

    fn beta(&self, t: f64) -> f64 {
        self.beta_scale * (1.0 - self.gamma(t).cos())
    }

    fn gamma_dot(&self, t: f64) -> f64 {
        self.gamma_and_rate(t).1
    }

    fn beta_dot(&self, t: f64) -> f64 {
        let (gamma, gamma_dot) = self.gamma_and_rate(t);
        self.beta_scale * gamma.sin() * gamma_dot
    }

    fn phase(&self) -> f64 {
        self.phase
    }

    fn duration(&self) -> f64 {
        self.tf
    }
}

pub fn angle_trajectory(coeffs: &PulseCoefficients) -> AnsatzTrajectory {
    let beta_scale = if coeffs.task.is_two_level() {
        0.0
    } else {
        (PI - coeffs.target.theta) / 2.0
    };
    AnsatzTrajectory {
        task: coeffs.task,
        a: coeffs.a.clone(),
        tf: coeffs.tf,
        beta_scale,
        phase: coeffs.target.phi,
    }
}

/// Pump and Stokes envelopes from the general consistency relations
/// `Ω_p = 2(β̇ cotγ sinβ + γ̇ cosβ)`, `Ω_s = 2(β̇ cotγ cosβ − γ̇ sinβ)`.
///
/// Singular where `sinγ = 0` unless `β̇` vanishes there too.
pub fn consistent_envelopes(trajectory: &dyn AngleTrajectory, t: f64) -> (f64, f64) {
    let gamma = trajectory.gamma(t);
    let (sb, cb) = trajectory.beta(t).sin_cos();
    let gamma_dot = trajectory.gamma_dot(t);
    let beta_dot = trajectory.beta_dot(t);
    let cot = gamma.cos() / gamma.sin();
    (
        2.0 * (beta_dot * cot * sb + gamma_dot * cb),
        2.0 * (beta_dot * cot * cb - gamma_dot * sb),
    )
}

/// Complex envelope `t ↦ Ω(t)` in rad/μs.
pub type Envelope = Arc<dyn Fn(f64) -> Complex64 + Send + Sync>;

/// Pump and Stokes envelopes over `[0, t_f]` with the static Stokes phase `φ`.
///
/// The pump couples `|1⟩ ↔ |e⟩` and the Stokes field `|e⟩ ↔ |0⟩` through
/// `Ω_s e^{−iφ}`. Envelopes may be signed or complex.
#[derive(Clone)]
pub struct PulsePair {
    omega_p: Envelope,
    omega_s: Envelope,
    phase: f64,
    tf: f64,
}

impl std::fmt::Debug for PulsePair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PulsePair")
            .field("phase", &self.phase)
            .field("tf", &self.tf)
            .finish_non_exhaustive()
    }
}

/// One row of a sampled pulse.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PulseSample {
    pub t: f64,
    pub omega_p: Complex64,
    pub omega_s: Complex64,
}

impl PulsePair {
    pub fn new(omega_p: Envelope, omega_s: Envelope, phase: f64, tf: f64) -> Self {
        Self {
            omega_p,
            omega_s,
            phase,
            tf,
        }
    }

    pub fn from_real(
        omega_p: impl Fn(f64) -> f64 + Send + Sync + 'static,
        omega_s: impl Fn(f64) -> f64 + Send + Sync + 'static,
        phase: f64,
        tf: f64,
    ) -> Self {
        Self::new(
            Arc::new(move |t| Complex64::new(omega_p(t), 0.0)),
            Arc::new(move |t| Complex64::new(omega_s(t), 0.0)),
            phase,
            tf,
        )
    }

    /// Both fields off for `tf`.
    pub fn zero(tf: f64, phase: f64) -> Self {
        Self::from_real(|_| 0.0, |_| 0.0, phase, tf)
    }

    pub fn eval(&self, t: f64) -> (Complex64, Complex64) {
        ((self.omega_p)(t), (self.omega_s)(t))
    }

    pub fn omega_p(&self, t: f64) -> Complex64 {
        (self.omega_p)(t)
    }

    pub fn omega_s(&self, t: f64) -> Complex64 {
        (self.omega_s)(t)
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn tf(&self) -> f64 {
        self.tf
    }

    /// Both envelopes multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let (p, s) = (self.omega_p.clone(), self.omega_s.clone());
        Self::new(
            Arc::new(move |t| p(t) * factor),
            Arc::new(move |t| s(t) * factor),
            self.phase,
            self.tf,
        )
    }

    /// `Ω_new(t) = −Ω(t_f − t)` on both channels.
    pub fn time_reverse(&self) -> Self {
        let (p, s, tf) = (self.omega_p.clone(), self.omega_s.clone(), self.tf);
        Self::new(
            Arc::new(move |t| -p(tf - t)),
            Arc::new(move |t| -s(tf - t)),
            self.phase,
            self.tf,
        )
    }

    /// Samples on a uniform grid; `step` must divide `t_f`.
    pub fn sample(&self, step: f64) -> Result<Vec<PulseSample>> {
        let n = grid_intervals(self.tf, step)?;
        Ok((0..=n)
            .map(|i| {
                let t = self.tf * i as f64 / n as f64;
                let (omega_p, omega_s) = self.eval(t);
                PulseSample {
                    t,
                    omega_p,
                    omega_s,
                }
            })
            .collect())
    }

    /// Largest `|Ω_p|` and `|Ω_s|` on a sampling grid, in rad/μs.
    pub fn peak(&self, step: f64) -> Result<(f64, f64)> {
        Ok(self
            .sample(step)?
            .iter()
            .fold((0.0f64, 0.0f64), |(p, s), x| {
                (p.max(x.omega_p.norm()), s.max(x.omega_s.norm()))
            }))
    }

    /// CSV `t_us,omega_p_MHz,omega_s_MHz,phase_rad`; envelope columns are
    /// `Re Ω / 2π`.
    pub fn write_csv<W: Write>(&self, step: f64, mut out: W) -> Result<()> {
        let rows = self.sample(step)?;
        let io = |e: io::Error| Error::validation("output", e.to_string());
        writeln!(out, "t_us,omega_p_MHz,omega_s_MHz,phase_rad").map_err(io)?;
        for row in rows {
            writeln!(
                out,
                "{},{},{},{}",
                row.t,
                angular_to_mhz(row.omega_p.re),
                angular_to_mhz(row.omega_s.re),
                self.phase
            )
            .map_err(io)?;
        }
        Ok(())
    }
}

/// Number of intervals of width `step` in `[0, tf]`; errors unless `step` divides `tf`.
pub fn grid_intervals(tf: f64, step: f64) -> Result<usize> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::validation("step", "must be positive"));
    }
    let n = (tf / step).round();
    if n < 1.0 || (n * step - tf).abs() > 1e-9 * tf.max(step) {
        return Err(Error::validation(
            "step",
            format!("{step} μs does not divide the duration {tf} μs"),
        ));
    }
    Ok(n as usize)
}

/// Envelopes for a coefficient set; the Stokes phase is the target phase.
pub fn synthesize_pulses(coeffs: &PulseCoefficients) -> PulsePair {
    let trajectory = Arc::new(angle_trajectory(coeffs));
    let (tp, ts) = (trajectory.clone(), trajectory);
    PulsePair::from_real(
        move |t| tp.envelopes(t).0,
        move |t| ts.envelopes(t).1,
        coeffs.target.phi,
        coeffs.tf,
    )
}

/// Optical transition a pulse drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transition {
    /// `|1⟩ ↔ |e⟩`
    Pump,
    /// `|e⟩ ↔ |0⟩`
    Stokes,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChsPulse {
    pub transition: Transition,
    /// Pulse centre in μs.
    pub center: f64,
}

/// Complex hyperbolic secant pulses: amplitude `Ω_max sech(β(t−t_c))` and
/// frequency offset `μβ tanh(β(t−t_c))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChsParameters {
    /// Peak Rabi frequency in rad/μs.
    pub omega_max: f64,
    /// Truncation rate in 1/μs.
    pub beta: f64,
    /// Chirp ratio.
    pub mu: f64,
    /// Total duration in μs.
    pub duration: f64,
    /// Static Stokes phase.
    #[serde(default)]
    pub phase: f64,
    pub pulses: Vec<ChsPulse>,
}

impl ChsParameters {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("chs.omega_max", self.omega_max),
            ("chs.beta", self.beta),
            ("chs.duration", self.duration),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(name, "must be positive"));
            }
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::validation("chs.mu", "must be non-negative"));
        }
        if self.pulses.is_empty() {
            return Err(Error::validation("chs.pulses", "assign at least one pulse"));
        }
        Ok(())
    }

    pub fn amplitude(&self, center: f64, t: f64) -> f64 {
        self.omega_max / (self.beta * (t - center)).cosh()
    }

    /// Instantaneous frequency offset in rad/μs.
    pub fn frequency_offset(&self, center: f64, t: f64) -> f64 {
        self.mu * self.beta * (self.beta * (t - center)).tanh()
    }

    /// `Ω_max sech(x) e^{iμ ln cosh x}` with `x = β(t − t_c)`; the phase
    /// derivative is the frequency offset.
    fn envelope(&self, center: f64, t: f64) -> Complex64 {
        let x = self.beta * (t - center);
        let ax = x.abs();
        // ln cosh x without overflow
        let log_cosh = ax + (-2.0 * ax).exp().ln_1p() - std::f64::consts::LN_2;
        Complex64::from_polar(self.amplitude(center, t), self.mu * log_cosh)
    }
}

/// Pulse pair realising the CHS pulses as phase-modulated complex envelopes.
pub fn synthesize_chs(params: &ChsParameters) -> Result<PulsePair> {
    params.validate()?;
    let channel = |which: Transition| -> Envelope {
        let p = params.clone();
        let centers: Vec<f64> = params
            .pulses
            .iter()
            .filter(|x| x.transition == which)
            .map(|x| x.center)
            .collect();
        Arc::new(move |t| centers.iter().map(|&c| p.envelope(c, t)).sum())
    };
    Ok(PulsePair::new(
        channel(Transition::Pump),
        channel(Transition::Stokes),
        params.phase,
        params.duration,
    ))
}
