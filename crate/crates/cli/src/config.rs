//! TOML run configuration.
//!
//! Every section is optional; a missing `coefficients` table selects the
//! published coefficients of the configured task.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use sta_core::dynamics::{DecoherenceModel, ErrorChannel};
use sta_core::optimizer::{CoefficientRange, Objective, Refinement, ScanPlan};
use sta_core::pulse::{
    ChsParameters, ChsPulse, EvenCoefficients, FreeCoefficient, PulseCoefficients, TaskKind,
    Transition,
};
use sta_core::quantum::TargetState;
use sta_core::units::{mhz_to_angular, NANOSECOND};

/// Marks errors caused by the configuration rather than the computation.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Option<TaskKind>,
    pub tf_us: Option<f64>,
    /// Superposition end of the task: the target for `create-asqs`, the
    /// initial state for `return-to-one`.
    pub target: Option<TargetState>,
    pub coefficients: Option<CoefficientsConfig>,
    #[serde(default)]
    pub channel: ChannelConfig,
    pub decoherence: Option<DecoherenceConfig>,
    #[serde(default)]
    pub sweep: SweepConfig,
    pub scan: Option<ScanConfig>,
    #[serde(default)]
    pub objective: Objective,
    pub chs: Option<ChsConfig>,
    pub step_ns: Option<f64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub plot: bool,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsConfig {
    /// Full list `a₁…a₂ₖ`; must satisfy both constraints.
    pub a: Option<Vec<f64>>,
    pub a2: Option<f64>,
    pub a6: Option<f64>,
    pub a8: Option<f64>,
    /// Run the coordinate scan and use its winner.
    #[serde(default)]
    pub optimize: bool,
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(default)]
    pub detuning_mhz: f64,
    #[serde(default)]
    pub eta: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoherenceConfig {
    pub t2_us: Vec<f64>,
    #[serde(default = "half")]
    pub mixed_overlap: f64,
}

fn half() -> f64 {
    0.5
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub detuning_min_mhz: f64,
    pub detuning_max_mhz: f64,
    pub detuning_spacing_mhz: f64,
    pub windows_mhz: Vec<f64>,
    pub eta_min: f64,
    pub eta_max: f64,
    pub eta_count: usize,
    pub eta_detunings_mhz: Vec<f64>,
    pub excitation_cutoff_mhz: f64,
    pub excitation_range_mhz: f64,
    pub excitation_spacing_mhz: f64,
    /// Also report a Gaussian-weighted mean fidelity of this FWHM.
    pub gaussian_fwhm_mhz: Option<f64>,
    pub map: Option<MapConfig>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            detuning_min_mhz: -10.0,
            detuning_max_mhz: 10.0,
            detuning_spacing_mhz: 0.01,
            windows_mhz: vec![0.17, 0.34],
            eta_min: -0.2,
            eta_max: 0.2,
            eta_count: 41,
            eta_detunings_mhz: vec![0.0, 0.17],
            excitation_cutoff_mhz: 3.5,
            excitation_range_mhz: 10.0,
            excitation_spacing_mhz: 0.01,
            gaussian_fwhm_mhz: None,
            map: None,
        }
    }
}

/// Fidelity map over one free coefficient and detuning.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    pub coefficient: FreeCoefficient,
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub detuning_min_mhz: f64,
    pub detuning_max_mhz: f64,
    pub detuning_count: usize,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub order: Option<Vec<FreeCoefficient>>,
    pub a2: Option<CoefficientRange>,
    pub a6: Option<CoefficientRange>,
    pub a8: Option<CoefficientRange>,
    /// Values of `a₆` for which `a₈` is scanned again; empty disables.
    pub refine_a6: Option<Vec<f64>>,
}

/// CHS pulses with frequencies in MHz.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChsConfig {
    pub omega_max_mhz: f64,
    pub beta_per_us: f64,
    pub mu: f64,
    pub duration_us: f64,
    #[serde(default)]
    pub phase: f64,
    pub pulses: Vec<ChsPulseConfig>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChsPulseConfig {
    pub transition: Transition,
    pub center_us: f64,
}

/// Published `(a₂, a₆, a₈)` for each task at `t_f = 4 μs`.
pub fn preset(task: TaskKind) -> EvenCoefficients {
    match task {
        TaskKind::CreateAsqs => EvenCoefficients::new(-1.10, 0.06, 0.02),
        TaskKind::TwoLevelTransfer => EvenCoefficients::new(0.50, 0.14, 0.0),
        TaskKind::ReturnToOne => EvenCoefficients::new(1.06, 0.16, 0.0),
    }
}

/// How the coefficients are obtained.
pub enum CoefficientSource {
    Fixed(PulseCoefficients),
    Optimize,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| config_error(format!("{}: {e}", path.display())))
            .context("parsing config")
    }

    pub fn task(&self) -> TaskKind {
        self.task.unwrap_or(TaskKind::CreateAsqs)
    }

    pub fn tf(&self) -> f64 {
        self.tf_us.unwrap_or(4.0)
    }

    pub fn target(&self) -> TargetState {
        self.target.unwrap_or_else(TargetState::equal_superposition)
    }

    pub fn step(&self) -> f64 {
        self.step_ns.unwrap_or(1.0) * NANOSECOND
    }

    pub fn coefficient_source(&self) -> sta_core::Result<CoefficientSource> {
        let (task, tf, target) = (self.task(), self.tf(), self.target());
        let c = self.coefficients.clone().unwrap_or_default();
        if c.optimize {
            return Ok(CoefficientSource::Optimize);
        }
        if let Some(a) = c.a {
            return PulseCoefficients::new(task, a, tf, target).map(CoefficientSource::Fixed);
        }
        let base = if self.coefficients.is_some() {
            EvenCoefficients::default()
        } else {
            preset(task)
        };
        let even = EvenCoefficients::new(
            c.a2.unwrap_or(base.a2),
            c.a6.unwrap_or(base.a6),
            c.a8.unwrap_or(base.a8),
        );
        even.solve(task, tf, target).map(CoefficientSource::Fixed)
    }

    pub fn channel(&self) -> sta_core::Result<ErrorChannel> {
        ErrorChannel::new(self.channel.detuning_mhz, self.channel.eta)
    }

    pub fn decoherence_models(&self) -> sta_core::Result<Vec<DecoherenceModel>> {
        let Some(d) = &self.decoherence else {
            return Ok(Vec::new());
        };
        d.t2_us
            .iter()
            .map(|&t2| {
                let model = DecoherenceModel {
                    t2,
                    mixed_overlap: d.mixed_overlap,
                };
                model.validate().map(|_| model)
            })
            .collect()
    }

    pub fn scan_plan(&self) -> ScanPlan {
        let mut plan = ScanPlan::for_task(self.task());
        if let Some(s) = &self.scan {
            if let Some(order) = &s.order {
                plan.order = order.clone();
            }
            plan.a2 = s.a2.unwrap_or(plan.a2);
            plan.a6 = s.a6.unwrap_or(plan.a6);
            plan.a8 = s.a8.unwrap_or(plan.a8);
            if let Some(values) = &s.refine_a6 {
                plan.refinement = (!values.is_empty()).then(|| Refinement {
                    outer: FreeCoefficient::A6,
                    values: values.clone(),
                    inner: FreeCoefficient::A8,
                });
            }
        }
        plan
    }

    pub fn chs(&self) -> Result<ChsParameters> {
        let c = self
            .chs
            .as_ref()
            .ok_or_else(|| config_error("missing [chs] section"))?;
        Ok(ChsParameters {
            omega_max: mhz_to_angular(c.omega_max_mhz),
            beta: c.beta_per_us,
            mu: c.mu,
            duration: c.duration_us,
            phase: c.phase,
            pulses: c
                .pulses
                .iter()
                .map(|p| ChsPulse {
                    transition: p.transition,
                    center: p.center_us,
                })
                .collect(),
        })
    }

    /// Checks everything that can be checked before computing.
    pub fn validate(&self) -> sta_core::Result<()> {
        let invalid = |field: &str, reason: &str| sta_core::Error::Validation {
            field: field.into(),
            reason: reason.into(),
        };
        if !(self.tf() > 0.0 && self.tf().is_finite()) {
            return Err(invalid("tf_us", "must be positive"));
        }
        if !(self.step() > 0.0 && self.step().is_finite()) {
            return Err(invalid("step_ns", "must be positive"));
        }
        self.target().validate()?;
        self.channel()?;
        self.decoherence_models()?;
        self.objective.validate()?;
        if let CoefficientSource::Optimize = self.coefficient_source()? {
            self.scan_plan().validate()?;
        }
        let s = &self.sweep;
        if !(s.detuning_spacing_mhz > 0.0) {
            return Err(invalid("sweep.detuning_spacing_mhz", "must be positive"));
        }
        if !(s.excitation_spacing_mhz > 0.0) {
            return Err(invalid("sweep.excitation_spacing_mhz", "must be positive"));
        }
        if let Some(v) = s.windows_mhz.iter().find(|w| !(**w > 0.0)) {
            return Err(invalid(
                "sweep.windows_mhz",
                &format!("{v} is not positive"),
            ));
        }
        if let Some(w) = s.gaussian_fwhm_mhz.filter(|w| !(*w > 0.0)) {
            return Err(invalid(
                "sweep.gaussian_fwhm_mhz",
                &format!("{w} is not positive"),
            ));
        }
        if let Some(c) = &self.chs {
            if !(c.omega_max_mhz > 0.0) {
                return Err(invalid("chs.omega_max_mhz", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Contents of the coefficient file written by `optimize`; also a valid run
/// configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientFile {
    pub task: TaskKind,
    pub tf_us: f64,
    pub target: TargetState,
    pub coefficients: FullCoefficients,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullCoefficients {
    pub a: Vec<f64>,
}

impl CoefficientFile {
    pub fn from_coefficients(c: &PulseCoefficients) -> Self {
        Self {
            task: c.task,
            tf_us: c.tf,
            target: c.target,
            coefficients: FullCoefficients { a: c.a.clone() },
        }
    }

    #[cfg(test)]
    pub fn to_coefficients(&self) -> sta_core::Result<PulseCoefficients> {
        PulseCoefficients::new(
            self.task,
            self.coefficients.a.clone(),
            self.tf_us,
            self.target,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn parse(text: &str) -> RunConfig {
        toml::from_str(text).unwrap()
    }

    #[test]
    fn empty_config_uses_row_one() {
        let cfg = parse("");
        let CoefficientSource::Fixed(c) = cfg.coefficient_source().unwrap() else {
            panic!("expected fixed coefficients");
        };
        assert_eq!(c.task, TaskKind::CreateAsqs);
        assert!((c.get(4) - 0.17).abs() < 1e-12);
    }

    #[test]
    fn partial_even_coefficients_default_to_zero() {
        let cfg = parse("task = \"two-level-transfer\"\n[coefficients]\na2 = 0.5\n");
        let CoefficientSource::Fixed(c) = cfg.coefficient_source().unwrap() else {
            panic!("expected fixed coefficients");
        };
        assert_eq!(c.get(6), 0.0);
        assert!((c.get(4) - (-0.125)).abs() < 1e-12);
    }

    #[test]
    fn full_list_must_satisfy_constraints() {
        let cfg = parse("[coefficients]\na = [0, 0, 0, 0, 0, 0, 0, 0]\n");
        let err = cfg.coefficient_source().err().unwrap();
        assert!(err.to_string().contains("even constraint"));
    }

    #[test]
    fn coefficient_file_round_trips() {
        let original = EvenCoefficients::new(-1.0 / 3.0, 0.1 + 0.2, 1e-17)
            .solve(
                TaskKind::ReturnToOne,
                4.0,
                TargetState::new(0.3, 5.9).unwrap(),
            )
            .unwrap();
        let text = toml::to_string(&CoefficientFile::from_coefficients(&original)).unwrap();
        let file: CoefficientFile = toml::from_str(&text).unwrap();
        assert_eq!(file.to_coefficients().unwrap(), original);

        // the file is also a run configuration selecting the same coefficients
        let cfg: RunConfig = toml::from_str(&text).unwrap();
        let CoefficientSource::Fixed(c) = cfg.coefficient_source().unwrap() else {
            panic!("expected fixed coefficients");
        };
        assert_eq!(c, original);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("tf = 4.0").is_err());
    }

    #[test]
    fn scan_overrides() {
        let cfg = parse("[scan]\na2 = { min = -1.2, max = -1.0, step = 0.1 }\nrefine_a6 = []\n");
        let plan = cfg.scan_plan();
        assert_eq!(plan.a2.values().len(), 3);
        assert!(plan.refinement.is_none());
    }

    #[test]
    fn chs_units_converted() {
        let cfg = parse(
            "[chs]\nomega_max_mhz = 1.0\nbeta_per_us = 2.0\nmu = 3.0\nduration_us = 8.0\n\
             pulses = [{ transition = \"pump\", center_us = 4.0 }]\n",
        );
        let p = cfg.chs().unwrap();
        assert!((p.omega_max - TAU).abs() < 1e-12);
        assert_eq!(p.pulses[0].transition, Transition::Pump);
    }
}
