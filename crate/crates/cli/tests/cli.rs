use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sta_core::pulse::{EvenCoefficients, PulseCoefficients, TaskKind};
use sta_core::quantum::TargetState;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn sta(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sta"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(output: &Output) -> String {
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout.clone()).unwrap()
}

fn value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("{key} missing from\n{text}"))
        .parse()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn synth_writes_envelopes_below_peak_bound() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("create-asqs.toml");
    ok(&sta(
        &["synth", "--config", cfg.to_str().unwrap()],
        dir.path(),
    ));
    let rows = csv_rows(&dir.path().join("pulses.csv"));
    assert_eq!(rows.len(), 4001);
    let peak = rows
        .iter()
        .map(|r| r[1].abs().max(r[2].abs()))
        .fold(0.0, f64::max);
    assert!(peak < 1.6, "{peak}");
    assert!(!dir.path().join("pulses.svg").exists());
}

#[test]
fn reversed_envelopes_are_negated_mirror_images() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("create-asqs.toml");
    let cfg = cfg.to_str().unwrap();
    ok(&sta(&["synth", "--config", cfg], &dir.path().join("fwd")));
    ok(&sta(
        &["synth", "--config", cfg, "--reverse", "--plot"],
        &dir.path().join("rev"),
    ));
    let fwd = csv_rows(&dir.path().join("fwd/pulses.csv"));
    let rev = csv_rows(&dir.path().join("rev/pulses.csv"));
    let n = fwd.len();
    for i in 0..n {
        for col in [1, 2] {
            assert!((rev[i][col] + fwd[n - 1 - i][col]).abs() < 1e-12);
        }
    }
    assert!(dir.path().join("rev/pulses.svg").exists());
}

#[test]
fn constraint_violation_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[coefficients]\na = [0, 0, 0, 0, 0, 0, 0, 0]\n");
    let out = sta(&["synth", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("even constraint"), "{stderr}");
}

#[test]
fn bad_config_files_exit_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let out = sta(
        &["synth", "--config", missing.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));

    let cfg = write_config(dir.path(), "tf = 4.0\n");
    let out = sta(&["synth", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tf"));

    let cfg = write_config(dir.path(), "[target]\ntheta = 7.0\nphi = 0.0\n");
    let out = sta(&["synth", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("target.theta"));

    let out = sta(&["compare-chs"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[chs]"));
}

#[test]
fn coarse_step_exits_with_numerical_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = sta(&["propagate", "--step-ns", "200"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn propagate_summary_with_decoherence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("create-asqs.toml");
    let text = ok(&sta(
        &["propagate", "--config", cfg.to_str().unwrap()],
        dir.path(),
    ));
    assert!(value(&text, "fidelity") >= 0.9998);
    let dwell = value(&text, "dwell_time_us");
    assert!((dwell - 0.7).abs() <= 0.1);
    assert!((value(&text, "avg_fidelity_0.34MHz_t2_50us") - 0.991).abs() <= 0.001);
    assert!((value(&text, "avg_fidelity_0.34MHz_t2_2600us") - 0.998).abs() <= 0.001);
    assert_eq!(
        fs::read_to_string(dir.path().join("summary.txt")).unwrap(),
        text
    );
    let rows = csv_rows(&dir.path().join("trajectory.csv"));
    assert_eq!(rows.len(), 4001);
    assert_eq!(rows[0][7], 1.0);
}

#[test]
fn two_level_bloch_trajectory_starts_at_north_pole() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("two-level.toml");
    ok(&sta(
        &[
            "propagate",
            "--config",
            cfg.to_str().unwrap(),
            "--bloch",
            "--plot",
        ],
        dir.path(),
    ));
    let rows = csv_rows(&dir.path().join("bloch.csv"));
    assert_eq!(rows[0], vec![0.0, 0.0, 0.0, 1.0]);
    assert!(rows.iter().all(|r| r[1].abs() < 1e-3));
    assert!((rows.last().unwrap()[3] + 1.0).abs() < 1e-6);
    assert!(dir.path().join("bloch.svg").exists());
    assert!(dir.path().join("populations.svg").exists());
}

#[test]
fn sweep_outputs_match_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[sweep]\ndetuning_min_mhz = -1.0\ndetuning_max_mhz = 1.0\nwindows_mhz = [0.17, 0.34]\n\
         eta_count = 5\nexcitation_spacing_mhz = 0.5\n",
    );
    let cfg = cfg.to_str().unwrap();
    let one = dir.path().join("one");
    let many = dir.path().join("many");
    let report = ok(&sta(&["sweep", "--config", cfg, "--jobs", "1"], &one));
    ok(&sta(
        &["sweep", "--config", cfg, "--jobs", "3", "--plot"],
        &many,
    ));
    for name in ["detuning.csv", "eta.csv", "offres.csv", "report.txt"] {
        assert_eq!(
            fs::read(one.join(name)).unwrap(),
            fs::read(many.join(name)).unwrap(),
            "{name}"
        );
    }
    for name in ["detuning.svg", "eta.svg", "offres.svg"] {
        assert!(many.join(name).exists());
    }
    let avg = value(&report, "avg_fidelity_window");
    assert!((avg - 0.998).abs() <= 0.003);
    assert_eq!(value(&report, "cutoff_MHz"), 3.5);

    // two eta curves, at 0 and 0.17 MHz
    let eta = csv_rows(&many.join("eta.csv"));
    assert_eq!(eta.len(), 10);
    assert_eq!(eta[0][0], 0.0);
    assert_eq!(eta[5][0], 0.17);
    // both off-resonant bands, 14 points each
    assert_eq!(csv_rows(&many.join("offres.csv")).len(), 28);
}

#[test]
fn sweep_report_agrees_with_library() {
    use sta_core::pulse::synthesize_pulses;
    use sta_core::sweep::{off_resonant_excitation, SweepOptions};

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[sweep]\ndetuning_min_mhz = -0.5\ndetuning_max_mhz = 0.5\nwindows_mhz = [0.34]\n\
         eta_count = 3\nexcitation_spacing_mhz = 0.05\ngaussian_fwhm_mhz = 0.34\n",
    );
    let report = ok(&sta(
        &["sweep", "--config", cfg.to_str().unwrap()],
        dir.path(),
    ));
    let coeffs = EvenCoefficients::new(-1.1, 0.06, 0.02)
        .solve(
            TaskKind::CreateAsqs,
            4.0,
            TargetState::equal_superposition(),
        )
        .unwrap();
    let off = off_resonant_excitation(
        &synthesize_pulses(&coeffs),
        3.5,
        10.0,
        131,
        &SweepOptions::default(),
    )
    .unwrap();
    assert_eq!(value(&report, "max_offres_pop0"), off.max_pop0);
    // Gaussian weight recomputed from the exported curve
    let (sum, norm) = csv_rows(&dir.path().join("detuning.csv"))
        .iter()
        .fold((0.0, 0.0), |(s, n), r| {
            let w = (-4.0 * 2f64.ln() * (r[0] / 0.34).powi(2)).exp();
            (s + w * r[1], n + w)
        });
    assert!((value(&report, "avg_fidelity_gaussian") - sum / norm).abs() < 1e-12);
}

#[test]
fn optimize_writes_loadable_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[scan]\na2 = { min = -1.1, max = -1.1, step = 0.05 }\n\
         a6 = { min = 0.06, max = 0.06, step = 0.02 }\n\
         a8 = { min = 0.02, max = 0.02, step = 0.02 }\nrefine_a6 = []\n",
    );
    let text = ok(&sta(
        &["optimize", "--config", cfg.to_str().unwrap()],
        dir.path(),
    ));
    assert_eq!(value(&text, "a2"), -1.1);
    assert_eq!(value(&text, "a6"), 0.06);
    assert_eq!(value(&text, "a8"), 0.02);
    assert_eq!(value(&text, "score"), value(&text, "reference_score"));

    let log = fs::read_to_string(dir.path().join("scan_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 4);

    // the coefficient file parses back to the same coefficients
    #[derive(serde::Deserialize)]
    struct File {
        task: TaskKind,
        tf_us: f64,
        target: TargetState,
        coefficients: Coefficients,
    }
    #[derive(serde::Deserialize)]
    struct Coefficients {
        a: Vec<f64>,
    }
    let path = dir.path().join("coefficients.toml");
    let file: File = toml::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let parsed =
        PulseCoefficients::new(file.task, file.coefficients.a, file.tf_us, file.target).unwrap();
    let expected = EvenCoefficients::new(-1.1, 0.06, 0.02)
        .solve(
            TaskKind::CreateAsqs,
            4.0,
            TargetState::equal_superposition(),
        )
        .unwrap();
    assert_eq!(parsed, expected);

    // and drives synth directly
    let synth_dir = dir.path().join("synth");
    ok(&sta(
        &["synth", "--config", path.to_str().unwrap()],
        &synth_dir,
    ));
    let reference = dir.path().join("reference");
    ok(&sta(&["synth"], &reference));
    assert_eq!(
        fs::read(synth_dir.join("pulses.csv")).unwrap(),
        fs::read(reference.join("pulses.csv")).unwrap()
    );
}

#[test]
fn compare_chs_writes_both_curves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("compare-chs.toml");
    let text = ok(&sta(
        &["compare-chs", "--config", cfg.to_str().unwrap(), "--plot"],
        dir.path(),
    ));
    assert!(value(&text, "chs_fidelity_resonant") > 0.99);
    let rows = csv_rows(&dir.path().join("compare_detuning.csv"));
    assert_eq!(rows.len(), 401);
    assert!(dir.path().join("compare_detuning.svg").exists());
    assert!(dir.path().join("compare_eta.csv").exists());
}
