use anyhow::{Context, Result};
use std::cell::OnceCell;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use sta_core::dynamics::{
    bloch_trajectory, decoherence_adjusted_fidelity, write_bloch_csv, ErrorChannel, Propagator,
};
use sta_core::optimizer::{coordinate_scan, score};
use sta_core::pulse::{synthesize_chs, synthesize_pulses, PulseCoefficients, PulsePair};
use sta_core::quantum::ThreeLevelState;
use sta_core::sweep::{
    coefficient_map, detuning_sweep, eta_sweep, gaussian_average, off_resonant_excitation,
    windowed_average, Axis, AxisKind, CoefficientMap, RobustnessReport, SweepGrid, SweepOptions,
};
use sta_core::units::angular_to_mhz;

use crate::config::{CoefficientFile, CoefficientSource, RunConfig};
use crate::plot::{LineChart, Series};

/// Resolved configuration plus command-line overrides.
pub struct Run {
    pub config: RunConfig,
    pub out: PathBuf,
    pub plot: bool,
    pub options: SweepOptions,
    resolved: OnceCell<PulseCoefficients>,
}

impl Run {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let out = config.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        let options = SweepOptions {
            step: config.step(),
            jobs: config.jobs,
        };
        Ok(Self {
            plot: config.plot,
            out,
            options,
            config,
            resolved: OnceCell::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.path(name);
        let file = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        Ok(BufWriter::new(file))
    }

    fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let mut f = self.create(name)?;
        f.write_all(text.as_bytes())?;
        f.flush()?;
        Ok(())
    }

    fn chart(&self, name: &str, chart: LineChart) -> Result<()> {
        if self.plot {
            self.write_text(name, &chart.to_svg())?;
        }
        Ok(())
    }

    /// Coefficients from the config, running the scan at most once.
    fn coefficients(&self) -> Result<PulseCoefficients> {
        if let Some(c) = self.resolved.get() {
            return Ok(c.clone());
        }
        let c = match self.config.coefficient_source()? {
            CoefficientSource::Fixed(c) => c,
            CoefficientSource::Optimize => {
                eprintln!("running coordinate scan for coefficients");
                self.scan()?.best
            }
        };
        Ok(self.resolved.get_or_init(|| c).clone())
    }

    fn scan(&self) -> Result<sta_core::optimizer::ScanOutcome> {
        let c = &self.config;
        Ok(coordinate_scan(
            c.task(),
            c.tf(),
            c.target(),
            &c.scan_plan(),
            &c.objective,
            &self.options,
        )?)
    }

    fn endpoints(&self, reverse: bool) -> (ThreeLevelState, ThreeLevelState) {
        let task = self.config.task();
        let target = self.config.target();
        let (initial, fin) = (task.initial_state(&target), task.final_state(&target));
        if reverse {
            (fin, initial)
        } else {
            (initial, fin)
        }
    }

    fn pulses(&self, reverse: bool) -> Result<PulsePair> {
        let pulses = synthesize_pulses(&self.coefficients()?);
        Ok(if reverse {
            pulses.time_reverse()
        } else {
            pulses
        })
    }
}

fn grid_series(
    grid: &SweepGrid,
    f: impl Fn(&sta_core::sweep::SweepPoint) -> f64,
) -> Vec<(f64, f64)> {
    grid.series().into_iter().map(|(x, p)| (x, f(&p))).collect()
}

pub fn synth(run: &Run, reverse: bool) -> Result<()> {
    let pulses = run.pulses(reverse)?;
    let step = run.options.step;
    let mut f = run.create("pulses.csv")?;
    pulses.write_csv(step, &mut f)?;
    f.flush()?;
    let (pump, stokes) = pulses.peak(step)?;
    println!("peak_omega_p_MHz: {}", angular_to_mhz(pump));
    println!("peak_omega_s_MHz: {}", angular_to_mhz(stokes));
    let samples = pulses.sample(step)?;
    let series = |f: fn(&sta_core::pulse::PulseSample) -> f64| -> Vec<(f64, f64)> {
        samples.iter().map(|s| (s.t, f(s))).collect()
    };
    run.chart(
        "pulses.svg",
        LineChart::new("Rabi frequencies", "t (μs)", "Ω/2π (MHz)")
            .with(Series::new("Ω_p", series(|s| angular_to_mhz(s.omega_p.re))))
            .with(Series::new("Ω_s", series(|s| angular_to_mhz(s.omega_s.re)))),
    )?;
    println!("wrote {}", run.path("pulses.csv").display());
    Ok(())
}

pub fn propagate(run: &Run, reverse: bool, bloch: bool) -> Result<()> {
    let pulses = run.pulses(reverse)?;
    let (initial, target) = run.endpoints(reverse);
    let channel = run.config.channel()?;
    let result =
        Propagator::new(run.options.step)?.propagate(&pulses, channel, &initial, &target)?;

    let mut f = run.create("trajectory.csv")?;
    result.write_trajectory_csv(&mut f)?;
    f.flush()?;

    let [pop1, pope, pop0] = result.populations();
    let mut summary = String::new();
    summary.push_str(&format!("fidelity: {}\n", result.fidelity));
    summary.push_str(&format!("dwell_time_us: {}\n", result.dwell_time));
    summary.push_str(&format!("pop1: {pop1}\npope: {pope}\npop0: {pop0}\n"));
    summary.push_str(&format!("norm_drift: {:e}\n", result.norm_drift));
    let models = run.config.decoherence_models()?;
    for model in &models {
        let f = decoherence_adjusted_fidelity(result.fidelity, result.dwell_time, model)?;
        summary.push_str(&format!("fidelity_t2_{}us: {f}\n", model.t2));
    }
    // window averages at the configured amplitude error
    let eta = run.config.channel.eta;
    for &w in &run.config.sweep.windows_mhz {
        let axis = Axis::with_spacing(
            AxisKind::DetuningMhz,
            -w,
            w,
            run.config.sweep.detuning_spacing_mhz,
        )?;
        let avg = if eta == 0.0 {
            windowed_average(
                &detuning_sweep(&pulses, &initial, &target, axis, &run.options)?,
                w,
            )?
        } else {
            let propagator = Propagator::new(run.options.step)?.final_only();
            let schedule = propagator.schedule(&pulses)?;
            let values = axis.values();
            let mut sum = 0.0;
            for &d in &values {
                sum += propagator
                    .run(&schedule, ErrorChannel::new(d, eta)?, &initial, &target)?
                    .fidelity;
            }
            sum / values.len() as f64
        };
        summary.push_str(&format!("avg_fidelity_{w}MHz: {avg}\n"));
        for model in &models {
            let f = decoherence_adjusted_fidelity(avg, result.dwell_time, model)?;
            summary.push_str(&format!("avg_fidelity_{w}MHz_t2_{}us: {f}\n", model.t2));
        }
    }
    print!("{summary}");
    run.write_text("summary.txt", &summary)?;

    let pops = |k: usize| -> Vec<(f64, f64)> {
        result
            .trajectory
            .iter()
            .map(|s| (s.t, s.state.populations()[k]))
            .collect()
    };
    run.chart(
        "populations.svg",
        LineChart::new("Populations", "t (μs)", "population")
            .with(Series::new("|1⟩", pops(0)))
            .with(Series::new("|e⟩", pops(1)))
            .with(Series::new("|0⟩", pops(2))),
    )?;

    if bloch {
        let points = bloch_trajectory(&result);
        let mut f = run.create("bloch.csv")?;
        write_bloch_csv(&points, &mut f)?;
        f.flush()?;
        let component = |k: usize| -> Vec<(f64, f64)> {
            points
                .iter()
                .map(|(t, b)| (*t, [b.u, b.v, b.w][k]))
                .collect()
        };
        run.chart(
            "bloch.svg",
            LineChart::new("Bloch vector", "t (μs)", "component")
                .with(Series::new("u", component(0)))
                .with(Series::new("v", component(1)))
                .with(Series::new("w", component(2))),
        )?;
    }
    Ok(())
}

fn write_grid(run: &Run, name: &str, grid: &SweepGrid) -> Result<()> {
    let mut f = run.create(name)?;
    grid.write_csv(&mut f)?;
    f.flush()?;
    Ok(())
}

pub fn sweep(run: &Run) -> Result<()> {
    let cfg = &run.config.sweep;
    let pulses = run.pulses(false)?;
    let (initial, target) = run.endpoints(false);

    let axis = Axis::with_spacing(
        AxisKind::DetuningMhz,
        cfg.detuning_min_mhz,
        cfg.detuning_max_mhz,
        cfg.detuning_spacing_mhz,
    )?;
    let detuning = detuning_sweep(&pulses, &initial, &target, axis, &run.options)?;
    write_grid(run, "detuning.csv", &detuning)?;

    let eta_axis = Axis::new(AxisKind::Eta, cfg.eta_min, cfg.eta_max, cfg.eta_count)?;
    let mut eta_csv = String::from("detuning_MHz,eta,fidelity,pop1,pope,pop0,t_u_us\n");
    let mut eta_chart = LineChart::new("Amplitude error", "η", "fidelity");
    for &d in &cfg.eta_detunings_mhz {
        let grid = eta_sweep(&pulses, &initial, &target, d, eta_axis, &run.options)?;
        for (eta, p) in grid.series() {
            eta_csv.push_str(&format!(
                "{d},{eta},{},{},{},{},{}\n",
                p.fidelity, p.pop1, p.pope, p.pop0, p.dwell
            ));
        }
        eta_chart = eta_chart.with(Series::new(
            format!("Δ = {d} MHz"),
            grid_series(&grid, |p| p.fidelity),
        ));
    }
    run.write_text("eta.csv", &eta_csv)?;

    let per_side = ((cfg.excitation_range_mhz - cfg.excitation_cutoff_mhz)
        / cfg.excitation_spacing_mhz)
        .round() as usize
        + 1;
    let off = off_resonant_excitation(
        &pulses,
        cfg.excitation_cutoff_mhz,
        cfg.excitation_range_mhz,
        per_side,
        &run.options,
    )?;
    let mut offres = Vec::new();
    off.lower.write_csv(&mut offres)?;
    let mut upper = Vec::new();
    off.upper.write_csv(&mut upper)?;
    // second grid without its header
    offres.extend(upper.splitn(2, |b| *b == b'\n').nth(1).unwrap_or(&[]));
    run.write_text("offres.csv", &String::from_utf8(offres)?)?;

    let report = RobustnessReport::from_sweeps(&detuning, &cfg.windows_mhz, &off)?;
    let mut text = Vec::new();
    report.write_text(&mut text)?;
    let mut text = String::from_utf8(text)?;
    if let Some(fwhm) = cfg.gaussian_fwhm_mhz {
        text.push_str(&format!("gaussian_fwhm_MHz: {fwhm}\n"));
        text.push_str(&format!(
            "avg_fidelity_gaussian: {}\n",
            gaussian_average(&detuning, fwhm)?
        ));
    }
    print!("{text}");
    run.write_text("report.txt", &text)?;

    if let Some(m) = &cfg.map {
        let base = run.coefficients()?;
        let map = CoefficientMap {
            task: run.config.task(),
            tf: run.config.tf(),
            target: run.config.target(),
            fixed: sta_core::pulse::EvenCoefficients::new(base.get(2), base.get(6), base.get(8)),
            scanned: m.coefficient,
            scan: Axis::new(AxisKind::Coefficient(m.coefficient), m.min, m.max, m.count)?,
            detuning: Axis::new(
                AxisKind::DetuningMhz,
                m.detuning_min_mhz,
                m.detuning_max_mhz,
                m.detuning_count,
            )?,
        };
        write_grid(run, "map.csv", &coefficient_map(&map, &run.options)?)?;
    }

    run.chart(
        "detuning.svg",
        LineChart::new("Fidelity vs detuning", "Δ (MHz)", "fidelity")
            .with(Series::new("F", grid_series(&detuning, |p| p.fidelity))),
    )?;
    run.chart("eta.svg", eta_chart)?;
    run.chart(
        "offres.svg",
        LineChart::new("Off-resonant excitation", "Δ (MHz)", "population")
            .with(Series::new(
                "|0⟩, Δ < 0",
                grid_series(&off.lower, |p| p.pop0),
            ))
            .with(Series::new(
                "|0⟩, Δ > 0",
                grid_series(&off.upper, |p| p.pop0),
            ))
            .with(Series::new("|e⟩, Δ < 0", grid_series(&off.lower, |p| p.pope)).dashed())
            .with(Series::new("|e⟩, Δ > 0", grid_series(&off.upper, |p| p.pope)).dashed()),
    )?;
    Ok(())
}

pub fn optimize(run: &Run) -> Result<()> {
    let outcome = run.scan()?;
    let mut f = run.create("scan_log.csv")?;
    outcome.write_log_csv(&mut f)?;
    f.flush()?;
    let file = CoefficientFile::from_coefficients(&outcome.best);
    run.write_text("coefficients.toml", &toml::to_string(&file)?)?;
    let b = &outcome.best;
    println!(
        "a2: {}\na4: {}\na6: {}\na8: {}",
        b.get(2),
        b.get(4),
        b.get(6),
        b.get(8)
    );
    println!("mean_infidelity: {}", outcome.best_score.mean_infidelity);
    println!("max_offres_pop0: {}", outcome.best_score.max_offres_pop0);
    println!("score: {}", outcome.best_score.score);
    if let CoefficientSource::Fixed(reference) = run.config.coefficient_source()? {
        let s = score(&reference, &run.config.objective, &run.options)?;
        println!("reference_score: {}", s.score);
    }
    Ok(())
}

pub fn compare_chs(run: &Run) -> Result<()> {
    let cfg = &run.config.sweep;
    let shortcut = run.pulses(false)?;
    let chs = synthesize_chs(&run.config.chs()?)?;
    let (initial, target) = run.endpoints(false);
    let axis = Axis::with_spacing(
        AxisKind::DetuningMhz,
        cfg.detuning_min_mhz,
        cfg.detuning_max_mhz,
        cfg.detuning_spacing_mhz,
    )?;
    let a = detuning_sweep(&shortcut, &initial, &target, axis, &run.options)?;
    let b = detuning_sweep(&chs, &initial, &target, axis, &run.options)?;
    let mut csv =
        String::from("detuning_MHz,fidelity_shortcut,fidelity_chs,t_u_shortcut_us,t_u_chs_us\n");
    for ((d, p), (_, q)) in a.series().into_iter().zip(b.series()) {
        csv.push_str(&format!(
            "{d},{},{},{},{}\n",
            p.fidelity, q.fidelity, p.dwell, q.dwell
        ));
    }
    run.write_text("compare_detuning.csv", &csv)?;

    let eta_axis = Axis::new(AxisKind::Eta, cfg.eta_min, cfg.eta_max, cfg.eta_count)?;
    let mut eta_csv = String::from("detuning_MHz,eta,fidelity_shortcut,fidelity_chs\n");
    let mut eta_chart = LineChart::new("Amplitude error", "η", "fidelity");
    for &d in &cfg.eta_detunings_mhz {
        let ea = eta_sweep(&shortcut, &initial, &target, d, eta_axis, &run.options)?;
        let eb = eta_sweep(&chs, &initial, &target, d, eta_axis, &run.options)?;
        for ((eta, p), (_, q)) in ea.series().into_iter().zip(eb.series()) {
            eta_csv.push_str(&format!("{d},{eta},{},{}\n", p.fidelity, q.fidelity));
        }
        eta_chart = eta_chart
            .with(Series::new(
                format!("shortcut, Δ = {d}"),
                grid_series(&ea, |p| p.fidelity),
            ))
            .with(Series::new(format!("CHS, Δ = {d}"), grid_series(&eb, |p| p.fidelity)).dashed());
    }
    run.write_text("compare_eta.csv", &eta_csv)?;

    for (name, grid) in [("shortcut", &a), ("chs", &b)] {
        let on = grid
            .series()
            .into_iter()
            .min_by(|x, y| x.0.abs().total_cmp(&y.0.abs()))
            .map(|(_, p)| p)
            .expect("non-empty grid");
        println!("{name}_fidelity_resonant: {}", on.fidelity);
        println!("{name}_dwell_time_us: {}", on.dwell);
        for &w in &cfg.windows_mhz {
            if let Ok(avg) = windowed_average(grid, w) {
                println!("{name}_avg_fidelity_{w}MHz: {avg}");
            }
        }
    }
    run.chart(
        "compare_detuning.svg",
        LineChart::new("Shortcut vs CHS", "Δ (MHz)", "fidelity")
            .with(Series::new("shortcut", grid_series(&a, |p| p.fidelity)))
            .with(Series::new("CHS", grid_series(&b, |p| p.fidelity)).dashed()),
    )?;
    run.chart("compare_eta.svg", eta_chart)?;
    Ok(())
}
