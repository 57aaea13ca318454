//! Fidelity and population maps over detuning, amplitude error and ansatz
//! coefficients.
//!
//! Every grid point is an independent propagation, so points are farmed out
//! to a rayon pool and reassembled in grid order; results do not depend on
//! the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};

use crate::dynamics::{DriveSchedule, ErrorChannel, PropagationResult, Propagator};
use crate::pulse::{synthesize_pulses, EvenCoefficients, FreeCoefficient, PulsePair, TaskKind};
use crate::quantum::{TargetState, ThreeLevelState};
use crate::units::NANOSECOND;
use crate::{Error, Result};

/// Slack used when testing grid values against inclusive window edges.
const EDGE_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxisKind {
    DetuningMhz,
    Eta,
    Coefficient(FreeCoefficient),
}

impl AxisKind {
    pub fn label(&self) -> &'static str {
        match self {
            AxisKind::DetuningMhz => "detuning_MHz",
            AxisKind::Eta => "eta",
            AxisKind::Coefficient(c) => c.name(),
        }
    }
}

/// Uniform, inclusive grid `min, …, max` with `count ≥ 2` points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub kind: AxisKind,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(kind: AxisKind, min: f64, max: f64, count: usize) -> Result<Self> {
        let axis = Self {
            kind,
            min,
            max,
            count,
        };
        axis.validate()?;
        Ok(axis)
    }

    /// Grid with the given spacing; the span must be a whole number of steps.
    pub fn with_spacing(kind: AxisKind, min: f64, max: f64, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::validation(kind.label(), "spacing must be positive"));
        }
        let steps = ((max - min) / spacing).round();
        if (steps * spacing - (max - min)).abs() > 1e-9 * spacing.max(max - min) {
            return Err(Error::validation(
                kind.label(),
                format!("spacing {spacing} does not divide [{min}, {max}]"),
            ));
        }
        Self::new(kind, min, max, steps as usize + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.count < 2 {
            return Err(Error::validation(
                self.kind.label(),
                format!("axis needs at least 2 points, got {}", self.count),
            ));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min < self.max) {
            return Err(Error::validation(
                self.kind.label(),
                format!(
                    "axis must be strictly increasing, got [{}, {}]",
                    self.min, self.max
                ),
            ));
        }
        Ok(())
    }

    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            return self.max;
        }
        self.min + (self.max - self.min) * i as f64 / (self.count - 1) as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.value(i)).collect()
    }

    /// Same span with the interval count doubled.
    pub fn refined(&self) -> Self {
        Self {
            count: 2 * (self.count - 1) + 1,
            ..*self
        }
    }
}

/// Outcome of one propagation on a grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub fidelity: f64,
    pub pop1: f64,
    pub pope: f64,
    pub pop0: f64,
    /// Excited-state dwell time in μs.
    pub dwell: f64,
}

impl From<&PropagationResult> for SweepPoint {
    fn from(r: &PropagationResult) -> Self {
        let [pop1, pope, pop0] = r.populations();
        Self {
            fidelity: r.fidelity,
            pop1,
            pope,
            pop0,
            dwell: r.dwell_time,
        }
    }
}

/// One- or two-dimensional sweep; points are stored row-major with `axis2`
/// varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepGrid {
    pub axis1: Axis,
    pub axis2: Option<Axis>,
    pub points: Vec<SweepPoint>,
}

impl SweepGrid {
    pub fn new(axis1: Axis, axis2: Option<Axis>, points: Vec<SweepPoint>) -> Result<Self> {
        axis1.validate()?;
        if let Some(a) = &axis2 {
            a.validate()?;
        }
        let expected = axis1.count * axis2.map_or(1, |a| a.count);
        if points.len() != expected {
            return Err(Error::validation(
                "sweep",
                format!("{} points for a grid of {expected}", points.len()),
            ));
        }
        Ok(Self {
            axis1,
            axis2,
            points,
        })
    }

    pub fn at(&self, i1: usize, i2: usize) -> &SweepPoint {
        let width = self.axis2.map_or(1, |a| a.count);
        &self.points[i1 * width + i2]
    }

    /// `(value, point)` pairs of a 1-D grid, or of one row of a 2-D grid.
    pub fn row(&self, i1: usize) -> Vec<(f64, SweepPoint)> {
        match &self.axis2 {
            None => vec![(self.axis1.value(i1), self.points[i1])],
            Some(a2) => (0..a2.count)
                .map(|i2| (a2.value(i2), *self.at(i1, i2)))
                .collect(),
        }
    }

    /// `(value, point)` pairs along `axis1` of a 1-D grid.
    pub fn series(&self) -> Vec<(f64, SweepPoint)> {
        self.axis1
            .values()
            .into_iter()
            .zip(self.points.iter().copied())
            .collect()
    }

    /// CSV `axis1,[axis2,]fidelity,pop1,pope,pop0,t_u_us`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        match &self.axis2 {
            None => writeln!(
                out,
                "{},fidelity,pop1,pope,pop0,t_u_us",
                self.axis1.kind.label()
            )?,
            Some(a2) => writeln!(
                out,
                "{},{},fidelity,pop1,pope,pop0,t_u_us",
                self.axis1.kind.label(),
                a2.kind.label()
            )?,
        }
        let width = self.axis2.map_or(1, |a| a.count);
        for (k, p) in self.points.iter().enumerate() {
            let x1 = self.axis1.value(k / width);
            match &self.axis2 {
                None => write!(out, "{x1},")?,
                Some(a2) => write!(out, "{x1},{},", a2.value(k % width))?,
            }
            writeln!(
                out,
                "{},{},{},{},{}",
                p.fidelity, p.pop1, p.pope, p.pop0, p.dwell
            )?;
        }
        Ok(())
    }
}

/// Integrator step and worker count shared by all sweeps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepOptions {
    pub step: f64,
    /// Worker threads; `None` uses the global rayon pool.
    pub jobs: Option<usize>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            step: NANOSECOND,
            jobs: None,
        }
    }
}

impl SweepOptions {
    pub fn with_jobs(mut self, jobs: usize) -> Self {
        self.jobs = Some(jobs);
        self
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub(crate) fn propagator(&self) -> Result<Propagator> {
        Ok(Propagator::new(self.step)?.final_only())
    }

    /// Evaluates `f(0..n)` on the configured pool, preserving index order.
    pub(crate) fn map<T, F>(&self, n: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        match self.jobs {
            None => (0..n).into_par_iter().map(&f).collect(),
            Some(0) => Err(Error::validation("jobs", "need at least one worker")),
            Some(jobs) => rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| Error::Pool(e.to_string()))?
                .install(|| (0..n).into_par_iter().map(&f).collect()),
        }
    }
}

fn at_point(value: f64, r: Result<PropagationResult>) -> Result<SweepPoint> {
    r.map(|r| SweepPoint::from(&r))
        .map_err(|e| Error::SweepPoint {
            value,
            source: Box::new(e),
        })
}

fn expect_kind(axis: &Axis, kind: AxisKind) -> Result<()> {
    axis.validate()?;
    if axis.kind != kind {
        return Err(Error::validation(
            axis.kind.label(),
            format!("expected a {} axis", kind.label()),
        ));
    }
    Ok(())
}

fn detuning_points(
    schedule: &DriveSchedule,
    propagator: &Propagator,
    detunings: &[f64],
    eta: f64,
    initial: &ThreeLevelState,
    target: &ThreeLevelState,
    options: &SweepOptions,
) -> Result<Vec<SweepPoint>> {
    options.map(detunings.len(), |i| {
        let d = detunings[i];
        at_point(
            d,
            ErrorChannel::new(d, eta).and_then(|ch| propagator.run(schedule, ch, initial, target)),
        )
    })
}

/// `F(Δ)` at η = 0 on a uniform detuning grid.
pub fn detuning_sweep(
    pulses: &PulsePair,
    initial: &ThreeLevelState,
    target: &ThreeLevelState,
    axis: Axis,
    options: &SweepOptions,
) -> Result<SweepGrid> {
    expect_kind(&axis, AxisKind::DetuningMhz)?;
    let propagator = options.propagator()?;
    let schedule = propagator.schedule(pulses)?;
    let points = detuning_points(
        &schedule,
        &propagator,
        &axis.values(),
        0.0,
        initial,
        target,
        options,
    )?;
    SweepGrid::new(axis, None, points)
}

/// `F(η)` at a fixed detuning.
pub fn eta_sweep(
    pulses: &PulsePair,
    initial: &ThreeLevelState,
    target: &ThreeLevelState,
    detuning_mhz: f64,
    axis: Axis,
    options: &SweepOptions,
) -> Result<SweepGrid> {
    expect_kind(&axis, AxisKind::Eta)?;
    if !(axis.min > -1.0 && axis.max <= 1.0) {
        return Err(Error::validation("eta", "range must lie within (-1, 1]"));
    }
    let propagator = options.propagator()?;
    let schedule = propagator.schedule(pulses)?;
    let etas = axis.values();
    let points = options.map(etas.len(), |i| {
        at_point(
            etas[i],
            ErrorChannel::new(detuning_mhz, etas[i])
                .and_then(|ch| propagator.run(&schedule, ch, initial, target)),
        )
    })?;
    SweepGrid::new(axis, None, points)
}

/// Worst-case spill-over onto spectrally distant ions.
#[derive(Clone, Debug, PartialEq)]
pub struct OffResonantReport {
    pub cutoff: f64,
    pub range: f64,
    pub max_pop0: f64,
    pub max_pope: f64,
    pub min_pop1: f64,
    /// `[−range, −cutoff]`
    pub lower: SweepGrid,
    /// `[cutoff, range]`
    pub upper: SweepGrid,
}

/// Final populations from `|1⟩` for `cutoff ≤ |Δ| ≤ range`, `count` points per side.
pub fn off_resonant_excitation(
    pulses: &PulsePair,
    cutoff: f64,
    range: f64,
    count: usize,
    options: &SweepOptions,
) -> Result<OffResonantReport> {
    if !(cutoff >= 0.0 && range > cutoff) {
        return Err(Error::validation(
            "range",
            format!("need 0 <= cutoff < range, got cutoff {cutoff}, range {range}"),
        ));
    }
    let lower_axis = Axis::new(AxisKind::DetuningMhz, -range, -cutoff, count)?;
    let upper_axis = Axis::new(AxisKind::DetuningMhz, cutoff, range, count)?;
    let propagator = options.propagator()?;
    let schedule = propagator.schedule(pulses)?;
    let one = ThreeLevelState::one();
    let mut detunings = lower_axis.values();
    detunings.extend(upper_axis.values());
    let mut points = detuning_points(&schedule, &propagator, &detunings, 0.0, &one, &one, options)?;
    let upper_points = points.split_off(count);
    let lower = SweepGrid::new(lower_axis, None, points)?;
    let upper = SweepGrid::new(upper_axis, None, upper_points)?;
    let all = || lower.points.iter().chain(upper.points.iter());
    Ok(OffResonantReport {
        cutoff,
        range,
        max_pop0: all().map(|p| p.pop0).fold(0.0, f64::max),
        max_pope: all().map(|p| p.pope).fold(0.0, f64::max),
        min_pop1: all().map(|p| p.pop1).fold(1.0, f64::min),
        lower,
        upper,
    })
}

/// Unweighted mean fidelity over the points with `|Δ| ≤ window` (inclusive).
pub fn windowed_average(grid: &SweepGrid, window: f64) -> Result<f64> {
    if grid.axis2.is_some() {
        return Err(Error::validation(
            "sweep",
            "windowed average needs a 1-D grid",
        ));
    }
    expect_kind(&grid.axis1, AxisKind::DetuningMhz)?;
    let (sum, n) = grid
        .series()
        .into_iter()
        .filter(|(d, _)| d.abs() <= window + EDGE_SLACK)
        .fold((0.0, 0usize), |(s, n), (_, p)| (s + p.fidelity, n + 1));
    if n == 0 {
        return Err(Error::validation(
            "window",
            format!("no grid points with |detuning| <= {window} MHz"),
        ));
    }
    Ok(sum / n as f64)
}

/// Mean fidelity weighted by a Gaussian detuning distribution centred at zero
/// with full width at half maximum `fwhm`, over the whole grid.
pub fn gaussian_average(grid: &SweepGrid, fwhm: f64) -> Result<f64> {
    if grid.axis2.is_some() {
        return Err(Error::validation(
            "sweep",
            "gaussian average needs a 1-D grid",
        ));
    }
    expect_kind(&grid.axis1, AxisKind::DetuningMhz)?;
    if !(fwhm > 0.0 && fwhm.is_finite()) {
        return Err(Error::validation(
            "fwhm",
            format!("{fwhm} must be positive"),
        ));
    }
    let scale = 4.0 * std::f64::consts::LN_2 / (fwhm * fwhm);
    let (sum, norm) = grid
        .series()
        .into_iter()
        .fold((0.0, 0.0), |(s, n), (d, p)| {
            let w = (-scale * d * d).exp();
            (s + w * p.fidelity, n + w)
        });
    if !(norm > 0.0) {
        return Err(Error::validation(
            "fwhm",
            format!("{fwhm} MHz puts no weight on the grid"),
        ));
    }
    Ok(sum / norm)
}

/// Summary printed by the sweep command.
#[derive(Clone, Debug, PartialEq)]
pub struct RobustnessReport {
    /// `(window MHz, mean fidelity)` pairs.
    pub windows: Vec<(f64, f64)>,
    pub cutoff: f64,
    pub range: f64,
    pub max_offres_pop0: f64,
    pub max_offres_pope: f64,
}

impl RobustnessReport {
    pub fn from_sweeps(
        grid: &SweepGrid,
        windows: &[f64],
        off_resonant: &OffResonantReport,
    ) -> Result<Self> {
        let windows = windows
            .iter()
            .map(|&w| windowed_average(grid, w).map(|avg| (w, avg)))
            .collect::<Result<_>>()?;
        Ok(Self {
            windows,
            cutoff: off_resonant.cutoff,
            range: off_resonant.range,
            max_offres_pop0: off_resonant.max_pop0,
            max_offres_pope: off_resonant.max_pope,
        })
    }

    /// `key: value` lines.
    pub fn write_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (w, avg) in &self.windows {
            writeln!(out, "window_MHz: {w}")?;
            writeln!(out, "avg_fidelity_window: {avg}")?;
        }
        writeln!(out, "cutoff_MHz: {}", self.cutoff)?;
        writeln!(out, "range_MHz: {}", self.range)?;
        writeln!(out, "max_offres_pop0: {}", self.max_offres_pop0)?;
        writeln!(out, "max_offres_pope: {}", self.max_offres_pope)
    }
}

/// 2-D map of fidelity and populations over one free coefficient and Δ.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientMap {
    pub task: TaskKind,
    pub tf: f64,
    pub target: TargetState,
    /// Values of the coefficients that are not scanned.
    pub fixed: EvenCoefficients,
    pub scanned: FreeCoefficient,
    pub scan: Axis,
    pub detuning: Axis,
}

/// Evaluates a [`CoefficientMap`]; `a₄` is re-solved at every scan value.
pub fn coefficient_map(map: &CoefficientMap, options: &SweepOptions) -> Result<SweepGrid> {
    expect_kind(&map.scan, AxisKind::Coefficient(map.scanned))?;
    expect_kind(&map.detuning, AxisKind::DetuningMhz)?;
    let propagator = options.propagator()?;
    let scan_values = map.scan.values();
    let schedules = options.map(scan_values.len(), |i| {
        let coeffs = map
            .fixed
            .with(map.scanned, scan_values[i])
            .solve(map.task, map.tf, map.target)?;
        propagator.schedule(&synthesize_pulses(&coeffs))
    })?;
    let initial = map.task.initial_state(&map.target);
    let target = map.task.final_state(&map.target);
    let detunings = map.detuning.values();
    let width = detunings.len();
    let points = options.map(scan_values.len() * width, |k| {
        let d = detunings[k % width];
        at_point(
            d,
            propagator.run(
                &schedules[k / width],
                ErrorChannel::detuned(d),
                &initial,
                &target,
            ),
        )
    })?;
    SweepGrid::new(map.scan, Some(map.detuning), points)
}
