//! Penalized objective and the coordinate scan over `(a₂, a₆, a₈)`.
//!
//! The objective is the mean infidelity inside a small detuning window plus a
//! hinge penalty on the worst `|0⟩` leakage seen by far-detuned ions. The scan
//! optimizes one coefficient at a time, each step starting from the previous
//! winner, and then re-scans the last coefficient for a fixed set of values of
//! an earlier one. Everything is deterministic.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{self, Write};

use crate::pulse::{
    synthesize_pulses, EvenCoefficients, FreeCoefficient, PulseCoefficients, TaskKind,
};
use crate::quantum::TargetState;
use crate::sweep::{
    detuning_sweep, off_resonant_excitation, windowed_average, Axis, AxisKind, SweepOptions,
};
use crate::{Error, Result};

/// Scalarized robustness criteria. All frequencies in MHz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Objective {
    pub fidelity_window: f64,
    pub excitation_cutoff: f64,
    pub excitation_cap: f64,
    pub penalty_weight: f64,
    /// Outer edge of the off-resonant band.
    pub excitation_range: f64,
    /// Grid spacing inside the fidelity window.
    pub detuning_spacing: f64,
    /// Grid spacing across the off-resonant band.
    pub excitation_spacing: f64,
}

impl Default for Objective {
    fn default() -> Self {
        Self {
            fidelity_window: 0.17,
            excitation_cutoff: 3.5,
            excitation_cap: 0.02,
            penalty_weight: 10.0,
            excitation_range: 10.0,
            detuning_spacing: 0.01,
            excitation_spacing: 0.05,
        }
    }
}

impl Objective {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("objective.fidelity_window", self.fidelity_window),
            ("objective.excitation_cutoff", self.excitation_cutoff),
            ("objective.excitation_cap", self.excitation_cap),
            ("objective.detuning_spacing", self.detuning_spacing),
            ("objective.excitation_spacing", self.excitation_spacing),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::validation(name, format!("{value} must be positive")));
            }
        }
        if !(self.penalty_weight >= 0.0 && self.penalty_weight.is_finite()) {
            return Err(Error::validation(
                "objective.penalty_weight",
                "must be non-negative",
            ));
        }
        if !(self.excitation_range > self.excitation_cutoff) {
            return Err(Error::validation(
                "objective.excitation_range",
                "must exceed the excitation cutoff",
            ));
        }
        Ok(())
    }

    fn window_axis(&self) -> Result<Axis> {
        Axis::with_spacing(
            AxisKind::DetuningMhz,
            -self.fidelity_window,
            self.fidelity_window,
            self.detuning_spacing,
        )
    }

    fn points_per_side(&self) -> usize {
        let span = self.excitation_range - self.excitation_cutoff;
        (span / self.excitation_spacing).round().max(1.0) as usize + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreBreakdown {
    pub mean_infidelity: f64,
    pub max_offres_pop0: f64,
    pub score: f64,
}

/// `mean_infidelity + λ·max(0, max_pop0 − cap)`.
pub fn score_from_metrics(
    mean_fidelity: f64,
    max_offres_pop0: f64,
    objective: &Objective,
) -> ScoreBreakdown {
    let mean_infidelity = (1.0 - mean_fidelity).max(0.0);
    let excess = (max_offres_pop0 - objective.excitation_cap).max(0.0);
    ScoreBreakdown {
        mean_infidelity,
        max_offres_pop0,
        score: mean_infidelity + objective.penalty_weight * excess,
    }
}

/// Evaluates the objective for one coefficient set.
pub fn score(
    coeffs: &PulseCoefficients,
    objective: &Objective,
    options: &SweepOptions,
) -> Result<ScoreBreakdown> {
    coeffs.validate()?;
    objective.validate()?;
    let pulses = synthesize_pulses(coeffs);
    let initial = coeffs.task.initial_state(&coeffs.target);
    let target = coeffs.task.final_state(&coeffs.target);
    let grid = detuning_sweep(
        &pulses,
        &initial,
        &target,
        objective.window_axis()?,
        options,
    )?;
    let mean = windowed_average(&grid, objective.fidelity_window)?;
    let off = off_resonant_excitation(
        &pulses,
        objective.excitation_cutoff,
        objective.excitation_range,
        objective.points_per_side(),
        options,
    )?;
    Ok(score_from_metrics(mean, off.max_pop0, objective))
}

/// Inclusive `min, min+step, …` up to `max`, rounded to 1e-12.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRange {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl CoefficientRange {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        let range = Self { min, max, step };
        range.validate()?;
        Ok(range)
    }

    pub fn single(value: f64) -> Self {
        Self {
            min: value,
            max: value,
            step: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::validation("scan.step", "must be positive"));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::validation(
                "scan.range",
                format!("empty range [{}, {}]", self.min, self.max),
            ));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize;
        (0..=n)
            .map(|k| ((self.min + k as f64 * self.step) * 1e12).round() / 1e12)
            .collect()
    }
}

/// Re-scan of `inner` for each of `values` assigned to `outer`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub outer: FreeCoefficient,
    pub values: Vec<f64>,
    pub inner: FreeCoefficient,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPlan {
    pub order: Vec<FreeCoefficient>,
    pub a2: CoefficientRange,
    pub a6: CoefficientRange,
    pub a8: CoefficientRange,
    /// Values of the coefficients before their own scan step.
    pub start: EvenCoefficients,
    pub refinement: Option<Refinement>,
}

impl ScanPlan {
    /// Ranges bracketing the known optima of each task.
    pub fn for_task(task: TaskKind) -> Self {
        let (a2, a6) = match task {
            TaskKind::CreateAsqs => ((-1.5, -0.7, 0.05), (0.0, 0.16, 0.02)),
            TaskKind::TwoLevelTransfer => ((0.2, 0.8, 0.05), (0.0, 0.2, 0.02)),
            TaskKind::ReturnToOne => ((0.7, 1.4, 0.05), (0.0, 0.2, 0.02)),
        };
        let range = |(min, max, step)| CoefficientRange { min, max, step };
        Self {
            order: vec![
                FreeCoefficient::A2,
                FreeCoefficient::A6,
                FreeCoefficient::A8,
            ],
            a2: range(a2),
            a6: range(a6),
            a8: range((-0.06, 0.06, 0.02)),
            start: EvenCoefficients::default(),
            refinement: Some(Refinement {
                outer: FreeCoefficient::A6,
                values: vec![0.04, 0.06, 0.08, 0.10, 0.12],
                inner: FreeCoefficient::A8,
            }),
        }
    }

    pub fn range(&self, which: FreeCoefficient) -> &CoefficientRange {
        match which {
            FreeCoefficient::A2 => &self.a2,
            FreeCoefficient::A6 => &self.a6,
            FreeCoefficient::A8 => &self.a8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order.is_empty() {
            return Err(Error::validation("scan.order", "no coefficients to scan"));
        }
        for which in &self.order {
            self.range(*which).validate()?;
        }
        if let Some(r) = &self.refinement {
            if r.outer == r.inner {
                return Err(Error::validation(
                    "scan.refinement",
                    "outer and inner coincide",
                ));
            }
            self.range(r.inner).validate()?;
        }
        Ok(())
    }

    /// Number of evaluations the scan performs.
    pub fn evaluation_count(&self) -> usize {
        let steps: usize = self
            .order
            .iter()
            .map(|c| self.range(*c).values().len())
            .sum();
        let refine = self
            .refinement
            .as_ref()
            .map_or(0, |r| r.values.len() * self.range(r.inner).values().len());
        steps + refine
    }
}

/// One evaluated point. Metrics are `None` when propagation failed.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanEntry {
    pub step: usize,
    pub coefficients: PulseCoefficients,
    pub metrics: Option<ScoreBreakdown>,
}

impl ScanEntry {
    pub fn even(&self) -> EvenCoefficients {
        EvenCoefficients::new(
            self.coefficients.get(2),
            self.coefficients.get(6),
            self.coefficients.get(8),
        )
    }
}

#[derive(Clone, Debug)]
pub struct ScanOutcome {
    pub best: PulseCoefficients,
    pub best_score: ScoreBreakdown,
    /// Lowest score seen so far, after each step.
    pub best_after_step: Vec<f64>,
    pub log: Vec<ScanEntry>,
}

impl ScanOutcome {
    /// CSV `step,a2,a4,a6,a8,mean_infidelity,max_offres_pop0,score`.
    pub fn write_log_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "step,a2,a4,a6,a8,mean_infidelity,max_offres_pop0,score"
        )?;
        for e in &self.log {
            let c = &e.coefficients;
            write!(
                out,
                "{},{},{},{},{},",
                e.step,
                c.get(2),
                c.get(4),
                c.get(6),
                c.get(8)
            )?;
            match e.metrics {
                Some(m) => writeln!(
                    out,
                    "{},{},{}",
                    m.mean_infidelity, m.max_offres_pop0, m.score
                )?,
                None => writeln!(out, "NaN,NaN,NaN")?,
            }
        }
        Ok(())
    }
}

fn better(a: &ScanEntry, b: &ScanEntry) -> bool {
    let (Some(ma), Some(mb)) = (a.metrics, b.metrics) else {
        return a.metrics.is_some();
    };
    if ma.score != mb.score {
        return ma.score < mb.score;
    }
    let key = |e: &ScanEntry| {
        let c = e.even();
        [c.a2.abs(), c.a6.abs(), c.a8.abs()]
    };
    key(a) < key(b)
}

struct Scanner<'a> {
    task: TaskKind,
    tf: f64,
    target: TargetState,
    objective: &'a Objective,
    options: &'a SweepOptions,
    cache: HashMap<[u64; 3], Option<ScoreBreakdown>>,
    log: Vec<ScanEntry>,
    best: Option<ScanEntry>,
}

impl Scanner<'_> {
    /// Scans `which` over `values` from `base`; returns the step winner.
    fn step(
        &mut self,
        step: usize,
        base: EvenCoefficients,
        which: FreeCoefficient,
        values: &[f64],
    ) -> Result<Option<EvenCoefficients>> {
        let points: Vec<EvenCoefficients> = values.iter().map(|&v| base.with(which, v)).collect();
        let coeffs = points
            .iter()
            .map(|p| p.solve(self.task, self.tf, self.target))
            .collect::<Result<Vec<_>>>()?;
        let key = |p: &EvenCoefficients| [p.a2.to_bits(), p.a6.to_bits(), p.a8.to_bits()];

        let pending: Vec<usize> = (0..points.len())
            .filter(|&i| !self.cache.contains_key(&key(&points[i])))
            .collect();
        let inner = SweepOptions {
            jobs: None,
            ..*self.options
        };
        let fresh = self.options.map(pending.len(), |k| {
            match score(&coeffs[pending[k]], self.objective, &inner) {
                Ok(s) => Ok(Some(s)),
                Err(e) if e.is_numerical() => Ok(None),
                Err(e) => Err(e),
            }
        })?;
        for (k, metrics) in pending.into_iter().zip(fresh) {
            self.cache.insert(key(&points[k]), metrics);
        }

        let mut winner: Option<ScanEntry> = None;
        for (p, c) in points.iter().zip(coeffs) {
            let entry = ScanEntry {
                step,
                coefficients: c,
                metrics: self.cache[&key(p)],
            };
            if entry.metrics.is_some() && winner.as_ref().is_none_or(|w| better(&entry, w)) {
                winner = Some(entry.clone());
            }
            self.log.push(entry);
        }
        if let Some(w) = &winner {
            if self.best.as_ref().is_none_or(|b| better(w, b)) {
                self.best = Some(w.clone());
            }
        }
        Ok(winner.map(|w| w.even()))
    }

    fn best_score(&self) -> f64 {
        self.best
            .as_ref()
            .and_then(|b| b.metrics)
            .map_or(f64::INFINITY, |m| m.score)
    }
}

/// Runs the ordered coordinate scan and the refinement loop.
///
/// The returned winner is the lowest-scoring point in the whole log, ties
/// going to the smallest `(|a₂|, |a₆|, |a₈|)`.
pub fn coordinate_scan(
    task: TaskKind,
    tf: f64,
    target: TargetState,
    plan: &ScanPlan,
    objective: &Objective,
    options: &SweepOptions,
) -> Result<ScanOutcome> {
    plan.validate()?;
    objective.validate()?;
    target.validate()?;
    let mut scanner = Scanner {
        task,
        tf,
        target,
        objective,
        options,
        cache: HashMap::new(),
        log: Vec::with_capacity(plan.evaluation_count()),
        best: None,
    };
    let mut best_after_step = Vec::new();
    let mut current = plan.start;
    let mut step = 0;
    for which in &plan.order {
        step += 1;
        if let Some(w) = scanner.step(step, current, *which, &plan.range(*which).values())? {
            current = w;
        }
        best_after_step.push(scanner.best_score());
    }
    if let Some(r) = &plan.refinement {
        let inner_values = plan.range(r.inner).values();
        for &v in &r.values {
            step += 1;
            scanner.step(step, current.with(r.outer, v), r.inner, &inner_values)?;
            best_after_step.push(scanner.best_score());
        }
    }
    let best = scanner.best.ok_or(Error::EmptyScan)?;
    Ok(ScanOutcome {
        best_score: best.metrics.expect("winner has metrics"),
        best: best.coefficients,
        best_after_step,
        log: scanner.log,
    })
}
