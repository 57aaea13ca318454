//! Fixed-step RK4 propagation of the driven Λ system.
//!
//! The amplitudes obey
//!
//! ```text
//! d/dt (C₁, C_e, C₀) = −(i/2) [ 0     Ω_p*   0
//!                               Ω_p   2Δ     Ω_s e^{−iφ}
//!                               0     c.c.   0          ] (C₁, C_e, C₀)
//! ```
//!
//! with both envelopes scaled by `1 + η`. Envelopes are evaluated exactly at
//! every RK4 stage time; a [`DriveSchedule`] caches those values so that
//! detuning and amplitude sweeps over one pulse pair evaluate them once.

use num_complex::Complex64;
use std::io::{self, Write};

use crate::invariant::{zero_eigenstate, AngleTrajectory};
use crate::pulse::{grid_intervals, PulsePair};
use crate::quantum::{bloch_vector, overlap_fidelity, BlochVector, ThreeLevelState};
use crate::units::{mhz_to_angular, NANOSECOND};
use crate::{Error, Result};

/// Norm drift beyond which a run is rejected.
pub const MAX_NORM_DRIFT: f64 = 1e-6;

/// Systematic errors applied during propagation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorChannel {
    /// Detuning Δ as an ordinary frequency in MHz.
    pub detuning_mhz: f64,
    /// Relative amplitude error η applied to both envelopes.
    pub eta: f64,
}

impl ErrorChannel {
    pub fn new(detuning_mhz: f64, eta: f64) -> Result<Self> {
        let channel = Self { detuning_mhz, eta };
        channel.validate()?;
        Ok(channel)
    }

    pub fn detuned(detuning_mhz: f64) -> Self {
        Self {
            detuning_mhz,
            eta: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.detuning_mhz.is_finite() {
            return Err(Error::validation("detuning", "must be finite"));
        }
        if !(self.eta > -1.0 && self.eta.is_finite()) {
            return Err(Error::validation(
                "eta",
                format!("{} must exceed -1", self.eta),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub state: ThreeLevelState,
}

#[derive(Clone, Debug)]
pub struct PropagationResult {
    pub final_state: ThreeLevelState,
    /// Samples on the integrator grid; empty when recording is off.
    pub trajectory: Vec<TrajectorySample>,
    /// `t_u = ∫₀^{t_f} |C_e|² dt` in μs.
    pub dwell_time: f64,
    pub fidelity: f64,
    /// `max |‖ψ‖² − 1|` over the run.
    pub norm_drift: f64,
}

impl PropagationResult {
    pub fn populations(&self) -> [f64; 3] {
        self.final_state.populations()
    }

    /// CSV `t_us,re_c1,im_c1,re_ce,im_ce,re_c0,im_c0,pop1,pope,pop0`.
    pub fn write_trajectory_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "t_us,re_c1,im_c1,re_ce,im_ce,re_c0,im_c0,pop1,pope,pop0"
        )?;
        for s in &self.trajectory {
            let [p1, pe, p0] = s.state.populations();
            let ThreeLevelState { c1, ce, c0 } = s.state;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                s.t, c1.re, c1.im, ce.re, ce.im, c0.re, c0.im, p1, pe, p0
            )?;
        }
        Ok(())
    }
}

/// Pump and phased Stokes couplings at the RK4 stage times of a grid.
#[derive(Clone, Debug)]
pub struct DriveSchedule {
    tf: f64,
    intervals: usize,
    /// `Ω_p` at `t_j = j·h/2`, `j = 0..=2n`.
    pump: Vec<Complex64>,
    /// `Ω_s e^{−iφ}` at the same times.
    stokes: Vec<Complex64>,
}

impl DriveSchedule {
    pub fn new(pulses: &PulsePair, step: f64) -> Result<Self> {
        let tf = pulses.tf();
        let intervals = grid_intervals(tf, step)?;
        if intervals < 2 {
            return Err(Error::validation(
                "step",
                format!("{step} μs leaves fewer than two integration steps"),
            ));
        }
        let rotation = Complex64::from_polar(1.0, -pulses.phase());
        let half_steps = 2 * intervals;
        let (pump, stokes) = (0..=half_steps)
            .map(|j| {
                let t = tf * j as f64 / half_steps as f64;
                let (p, s) = pulses.eval(t);
                (p, s * rotation)
            })
            .unzip();
        Ok(Self {
            tf,
            intervals,
            pump,
            stokes,
        })
    }

    pub fn step(&self) -> f64 {
        self.tf / self.intervals as f64
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    fn time(&self, i: usize) -> f64 {
        self.tf * i as f64 / self.intervals as f64
    }
}

type Amplitudes = [Complex64; 3];

#[inline]
fn derivative(c: &Amplitudes, pump: Complex64, stokes: Complex64, detuning: f64) -> Amplitudes {
    let minus_half_i = Complex64::new(0.0, -0.5);
    [
        minus_half_i * pump.conj() * c[1],
        minus_half_i * (pump * c[0] + c[1] * (2.0 * detuning) + stokes * c[2]),
        minus_half_i * stokes.conj() * c[1],
    ]
}

#[inline]
fn axpy(c: &Amplitudes, k: &Amplitudes, h: f64) -> Amplitudes {
    [c[0] + k[0] * h, c[1] + k[1] * h, c[2] + k[2] * h]
}

/// Composite Simpson weight of node `i` on `n` intervals, with a 3/8-rule
/// tail over the last three intervals when `n` is odd.
fn quadrature_weight(i: usize, n: usize) -> f64 {
    fn simpson(i: usize, m: usize) -> f64 {
        if i == 0 || i == m {
            1.0 / 3.0
        } else if i % 2 == 1 {
            4.0 / 3.0
        } else {
            2.0 / 3.0
        }
    }
    match n {
        0 => 0.0,
        1 => 0.5,
        _ if n.is_multiple_of(2) => simpson(i, n),
        _ => {
            let m = n - 3;
            let mut w = 0.0;
            if m > 0 && i <= m {
                w += simpson(i, m);
            }
            if i >= m {
                w += [3.0 / 8.0, 9.0 / 8.0, 9.0 / 8.0, 3.0 / 8.0][i - m];
            }
            w
        }
    }
}

/// RK4 integrator over a fixed grid.
#[derive(Clone, Copy, Debug)]
pub struct Propagator {
    step: f64,
    record: bool,
}

impl Default for Propagator {
    fn default() -> Self {
        Self {
            step: NANOSECOND,
            record: true,
        }
    }
}

impl Propagator {
    pub fn new(step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::validation("step", "must be positive"));
        }
        Ok(Self { step, record: true })
    }

    /// Skip trajectory storage (final state, dwell time and drift only).
    pub fn final_only(mut self) -> Self {
        self.record = false;
        self
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn schedule(&self, pulses: &PulsePair) -> Result<DriveSchedule> {
        DriveSchedule::new(pulses, self.step)
    }

    pub fn propagate(
        &self,
        pulses: &PulsePair,
        channel: ErrorChannel,
        initial: &ThreeLevelState,
        target: &ThreeLevelState,
    ) -> Result<PropagationResult> {
        self.run(&self.schedule(pulses)?, channel, initial, target)
    }

    /// Integrates over a precomputed schedule.
    pub fn run(
        &self,
        schedule: &DriveSchedule,
        channel: ErrorChannel,
        initial: &ThreeLevelState,
        target: &ThreeLevelState,
    ) -> Result<PropagationResult> {
        channel.validate()?;
        initial.ensure_normalized()?;
        target.ensure_normalized()?;
        let detuning = mhz_to_angular(channel.detuning_mhz);
        let scale = 1.0 + channel.eta;
        let n = schedule.intervals;
        let h = schedule.step();

        let mut c: Amplitudes = [initial.c1, initial.ce, initial.c0];
        let mut trajectory = Vec::with_capacity(if self.record { n + 1 } else { 0 });
        if self.record {
            trajectory.push(TrajectorySample {
                t: 0.0,
                state: *initial,
            });
        }
        let start_norm = initial.norm_sqr();
        let mut drift = (start_norm - 1.0).abs();
        let mut dwell = quadrature_weight(0, n) * c[1].norm_sqr();

        for i in 0..n {
            let (p0, s0) = (schedule.pump[2 * i] * scale, schedule.stokes[2 * i] * scale);
            let (pm, sm) = (
                schedule.pump[2 * i + 1] * scale,
                schedule.stokes[2 * i + 1] * scale,
            );
            let (p1, s1) = (
                schedule.pump[2 * i + 2] * scale,
                schedule.stokes[2 * i + 2] * scale,
            );
            let k1 = derivative(&c, p0, s0, detuning);
            let k2 = derivative(&axpy(&c, &k1, h / 2.0), pm, sm, detuning);
            let k3 = derivative(&axpy(&c, &k2, h / 2.0), pm, sm, detuning);
            let k4 = derivative(&axpy(&c, &k3, h), p1, s1, detuning);
            for j in 0..3 {
                c[j] += (k1[j] + (k2[j] + k3[j]) * 2.0 + k4[j]) * (h / 6.0);
            }
            let norm = c[0].norm_sqr() + c[1].norm_sqr() + c[2].norm_sqr();
            drift = drift.max((norm - 1.0).abs());
            dwell += quadrature_weight(i + 1, n) * c[1].norm_sqr();
            if self.record {
                trajectory.push(TrajectorySample {
                    t: schedule.time(i + 1),
                    state: ThreeLevelState::new(c[0], c[1], c[2]),
                });
            }
        }

        if !(drift <= MAX_NORM_DRIFT) {
            return Err(Error::Integration { drift, step: h });
        }
        let final_state = ThreeLevelState::new(c[0], c[1], c[2]);
        Ok(PropagationResult {
            final_state,
            trajectory,
            dwell_time: dwell * h,
            fidelity: overlap_fidelity(&final_state, target)?,
            norm_drift: drift,
        })
    }
}

/// Integrates the amplitude equations over the pulse and records the trajectory.
pub fn propagate(
    pulses: &PulsePair,
    channel: ErrorChannel,
    initial: &ThreeLevelState,
    target: &ThreeLevelState,
    step: f64,
) -> Result<PropagationResult> {
    Propagator::new(step)?.propagate(pulses, channel, initial, target)
}

/// Propagates from `|φ₀(0)⟩` at Δ = 0, η = 0 and returns
/// `max_t (1 − |⟨φ₀(t)|ψ(t)⟩|²)` over the grid.
pub fn track_invariant_eigenstate(
    pulses: &PulsePair,
    trajectory: &dyn AngleTrajectory,
    step: f64,
) -> Result<f64> {
    let initial = zero_eigenstate(trajectory, 0.0);
    let result =
        Propagator::new(step)?.propagate(pulses, ErrorChannel::default(), &initial, &initial)?;
    Ok(result
        .trajectory
        .iter()
        .map(|s| 1.0 - zero_eigenstate(trajectory, s.t).inner(&s.state).norm_sqr())
        .fold(0.0, f64::max))
}

/// Dephasing estimate for an excited-state dwell time `t_u`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecoherenceModel {
    /// Coherence time T₂ in μs.
    pub t2: f64,
    /// `⟨ψ_tg|ρ_mixed|ψ_tg⟩`.
    pub mixed_overlap: f64,
}

impl DecoherenceModel {
    /// Mixed state over the qubit subspace, overlap ½.
    pub fn new(t2: f64) -> Self {
        Self {
            t2,
            mixed_overlap: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t2 > 0.0) {
            return Err(Error::validation("t2", "coherence time must be positive"));
        }
        if !(0.0..=1.0).contains(&self.mixed_overlap) {
            return Err(Error::validation("mixed_overlap", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// `e^{−t_u/T₂} F + (1 − e^{−t_u/T₂}) ⟨ψ_tg|ρ_mixed|ψ_tg⟩`.
pub fn decoherence_adjusted_fidelity(
    ideal: f64,
    dwell: f64,
    model: &DecoherenceModel,
) -> Result<f64> {
    model.validate()?;
    if !(0.0..=1.0).contains(&ideal) {
        return Err(Error::validation("fidelity", "must lie in [0, 1]"));
    }
    if !(dwell >= 0.0 && dwell.is_finite()) {
        return Err(Error::validation("dwell", "must be non-negative"));
    }
    let coherent = (-dwell / model.t2).exp();
    Ok(coherent * ideal + (1.0 - coherent) * model.mixed_overlap)
}

/// Bloch vector of the `{|1⟩, |e⟩}` pair at each recorded sample.
pub fn bloch_trajectory(result: &PropagationResult) -> Vec<(f64, BlochVector)> {
    result
        .trajectory
        .iter()
        .map(|s| (s.t, bloch_vector(&s.state)))
        .collect()
}

/// CSV `t_us,u,v,w`.
pub fn write_bloch_csv<W: Write>(points: &[(f64, BlochVector)], mut out: W) -> io::Result<()> {
    writeln!(out, "t_us,u,v,w")?;
    for (t, b) in points {
        writeln!(out, "{},{},{},{}", t, b.u, b.v, b.w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulse::{synthesize_pulses, PulseCoefficients, TaskKind};
    use crate::quantum::TargetState;

    fn row_one() -> PulsePair {
        synthesize_pulses(
            &PulseCoefficients::from_even(
                TaskKind::CreateAsqs,
                -1.1,
                0.06,
                0.02,
                4.0,
                TargetState::equal_superposition(),
            )
            .unwrap(),
        )
    }

    #[test]
    fn quadrature_weights_integrate_polynomials() {
        for n in [2, 3, 4, 5, 8, 9] {
            let h = 1.0 / n as f64;
            let integral: f64 = (0..=n)
                .map(|i| {
                    let x = i as f64 * h;
                    quadrature_weight(i, n) * x * x * x
                })
                .sum::<f64>()
                * h;
            assert!((integral - 0.25).abs() < 1e-14, "n = {n}: {integral}");
        }
    }

    #[test]
    fn idle_state_one_is_stationary() {
        let pulses = PulsePair::zero(4.0, 0.0);
        let target = TargetState::equal_superposition();
        for detuning in [0.0, 0.5, -3.0] {
            let r = propagate(
                &pulses,
                ErrorChannel::detuned(detuning),
                &ThreeLevelState::one(),
                &target.embed(),
                NANOSECOND,
            )
            .unwrap();
            assert!((r.final_state.c1.norm_sqr() - 1.0).abs() < 1e-14);
            assert_eq!(r.dwell_time, 0.0);
            assert!((r.fidelity - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn step_must_divide_and_leave_two_steps() {
        let pulses = PulsePair::zero(4.0, 0.0);
        let one = ThreeLevelState::one();
        let channel = ErrorChannel::default();
        assert!(propagate(&pulses, channel, &one, &one, 0.3).is_err());
        assert!(propagate(&pulses, channel, &one, &one, 4.0).is_err());
        assert!(propagate(&pulses, channel, &one, &one, 2.0).is_ok());
    }

    #[test]
    fn eta_must_exceed_minus_one() {
        assert!(ErrorChannel::new(0.0, -1.0).is_err());
        assert!(ErrorChannel::new(0.0, -0.99).is_ok());
    }

    #[test]
    fn coarse_step_reports_integration_failure() {
        let pulses = PulsePair::from_real(|_| 400.0, |_| 0.0, 0.0, 4.0);
        let one = ThreeLevelState::one();
        let err = propagate(&pulses, ErrorChannel::default(), &one, &one, 0.05).unwrap_err();
        assert!(err.is_numerical(), "{err}");
    }

    #[test]
    fn row_one_reaches_equal_superposition() {
        let target = TargetState::equal_superposition();
        let r = propagate(
            &row_one(),
            ErrorChannel::default(),
            &ThreeLevelState::one(),
            &target.embed(),
            NANOSECOND,
        )
        .unwrap();
        assert!(r.fidelity >= 0.9999);
        let [p1, pe, p0] = r.populations();
        assert!((p1 - 0.5).abs() < 1e-3 && pe < 1e-3 && (p0 - 0.5).abs() < 1e-3);
        assert!((r.dwell_time - 0.7).abs() <= 0.1, "t_u = {}", r.dwell_time);
        assert!(r.norm_drift < 1e-9);
        assert_eq!(r.trajectory.len(), 4001);
    }

    #[test]
    fn inconsistent_amplitude_leaves_the_eigenstate() {
        let coeffs = PulseCoefficients::from_even(
            TaskKind::CreateAsqs,
            -1.1,
            0.06,
            0.02,
            4.0,
            TargetState::equal_superposition(),
        )
        .unwrap();
        let traj = crate::pulse::angle_trajectory(&coeffs);
        let pulses = synthesize_pulses(&coeffs);
        assert!(track_invariant_eigenstate(&pulses, &traj, NANOSECOND).unwrap() < 1e-6);
        assert!(track_invariant_eigenstate(&pulses.scaled(1.2), &traj, NANOSECOND).unwrap() > 1e-3);
        assert!(track_invariant_eigenstate(&pulses, &traj, 4.0).is_err());
    }

    #[test]
    fn decoherence_estimates() {
        let f = decoherence_adjusted_fidelity(0.998, 0.7, &DecoherenceModel::new(50.0)).unwrap();
        assert!((f - 0.991).abs() <= 1e-3, "{f}");
        let f = decoherence_adjusted_fidelity(0.998, 0.7, &DecoherenceModel::new(2600.0)).unwrap();
        assert!((f - 0.998).abs() <= 1e-3, "{f}");
        let f = decoherence_adjusted_fidelity(0.998, 0.7, &DecoherenceModel::new(f64::INFINITY))
            .unwrap();
        assert_eq!(f, 0.998);
        assert!(decoherence_adjusted_fidelity(1.2, 0.7, &DecoherenceModel::new(50.0)).is_err());
        assert!(decoherence_adjusted_fidelity(0.9, 0.7, &DecoherenceModel::new(0.0)).is_err());
    }

    #[test]
    fn bloch_trajectory_starts_at_north_pole() {
        let coeffs = PulseCoefficients::from_even(
            TaskKind::TwoLevelTransfer,
            0.5,
            0.14,
            0.0,
            4.0,
            TargetState::equal_superposition(),
        )
        .unwrap();
        let r = propagate(
            &synthesize_pulses(&coeffs),
            ErrorChannel::default(),
            &ThreeLevelState::one(),
            &TaskKind::TwoLevelTransfer.final_state(&coeffs.target),
            NANOSECOND,
        )
        .unwrap();
        let points = bloch_trajectory(&r);
        assert_eq!(
            points[0].1,
            BlochVector {
                u: 0.0,
                v: 0.0,
                w: 1.0
            }
        );
        let last = points.last().unwrap().1;
        assert!(last.u.abs() < 1e-3 && last.v.abs() < 1e-3 && (last.w + 1.0).abs() < 1e-3);
        assert!(points.iter().all(|(_, b)| b.u.abs() < 1e-3));
    }

    #[test]
    fn trajectory_csv_layout() {
        let one = ThreeLevelState::one();
        let r = propagate(
            &PulsePair::zero(1.0, 0.0),
            ErrorChannel::default(),
            &one,
            &one,
            0.5,
        )
        .unwrap();
        let mut buf = Vec::new();
        r.write_trajectory_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(
            lines[0],
            "t_us,re_c1,im_c1,re_ce,im_ce,re_c0,im_c0,pop1,pope,pop0"
        );
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[3], "1,1,0,0,0,0,0,1,0,0");
    }
}
