//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the binary exits non-zero if any fails.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use modescope_core::detect::{
    classify, default_min_prominence, detect_features, photon_calibration, CatalogEntry,
    Classification, DetectedFeature, ModeCatalog, Occupancy, Origin,
};
use modescope_core::fit::{fit_single_mode, ModeFitParams, PARAM_NAMES};
use modescope_core::lindblad::{evolve_dispersive, extract_rate, OracleConfig};
use modescope_core::sweep::{generate_rate_sweep, power_sweep_with_offset, Generation, NoiseModel};
use modescope_core::{
    measurement_dephasing_rate, occupancy, photons_to_temperature, AngularFrequency as W, Drive,
    Environment, Mode, QubitBaseline,
};
use proptest::test_runner::{Config, TestRunner};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn baseline_qubit() -> QubitBaseline {
    QubitBaseline {
        omega_q: W::from_ghz(6.0),
        gamma2_intrinsic: 1.0 / 65e-6,
        t1: 40e-6,
    }
}

fn oracle_gamma(mode: &Mode, drive: &Drive) -> Result<(f64, f64, f64), String> {
    let config = OracleConfig::for_mode(mode);
    let series = evolve_dispersive(mode, drive, &config).map_err(|e| e.to_string())?;
    let rate =
        extract_rate(&series.samples, config.transient_fraction).map_err(|e| e.to_string())?;
    let analytic = measurement_dephasing_rate(mode, drive, 0.5).map_err(|e| e.to_string())?;
    Ok((rate.gamma, analytic, series.final_state.photon_number()))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mode = Mode::new("m", W::from_ghz(7.0), W::from_mhz(1.0), W::from_mhz(0.5))
        .map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for k in [-2.0, -1.0, 0.0, 1.0, 2.0] {
        let drive = Drive::new(mode.omega_bare + mode.chi * k, W::from_mhz(0.2))
            .map_err(|e| e.to_string())?;
        let (oracle, analytic, _) = oracle_gamma(&mode, &drive)?;
        worst = worst.max(rel(oracle, analytic));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 0.05 && secs < 120.0,
        format!("max rel deviation {worst:.2e} (limit 5e-2), runtime {secs:.1} s (limit 120 s)"),
    )
}

fn criterion_2() -> Outcome {
    let mode =
        Mode::new("m", W::from_ghz(7.0), W::from_mhz(1.0), W::ZERO).map_err(|e| e.to_string())?;
    let eps = W::from_mhz(0.2);
    let mut worst = 0.0f64;
    for d_mhz in [-1.0, 0.0, 0.7] {
        let delta = W::from_mhz(d_mhz);
        let drive = Drive::new(mode.omega_bare + delta, eps).map_err(|e| e.to_string())?;
        let config = OracleConfig::for_mode(&mode);
        let series = evolve_dispersive(&mode, &drive, &config).map_err(|e| e.to_string())?;
        let k = mode.kappa.rad_per_s();
        let expected = eps.rad_per_s().powi(2) / (k * k / 4.0 + delta.rad_per_s().powi(2));
        worst = worst.max(rel(series.final_state.photon_number(), expected));
    }
    check(
        worst <= 0.01,
        format!("max rel deviation {worst:.2e} (limit 1e-2)"),
    )
}

fn bus_truth() -> ModeFitParams {
    ModeFitParams {
        omega_bare: W::from_ghz(7.24),
        kappa: W::from_khz(72.4),
        chi: W::from_khz(300.0),
        epsilon_rf: W::from_khz(120.0),
        asymmetry_w: 0.4,
        gamma2_baseline: 1.0 / 65e-6,
    }
}

fn bus_sweep(
    truth: &ModeFitParams,
    noise: &NoiseModel,
) -> Result<Vec<modescope_core::sweep::SweepRecord>, String> {
    let env = Environment::new(
        QubitBaseline {
            gamma2_intrinsic: truth.gamma2_baseline,
            ..baseline_qubit()
        },
        vec![truth.mode("bus")],
    )
    .map_err(|e| e.to_string())?;
    let grid: Vec<W> = (0..=600)
        .map(|i| W::from_hz(7.2385e9 + 5e3 * i as f64))
        .collect();
    generate_rate_sweep(
        &env,
        truth.epsilon_rf,
        &grid,
        truth.asymmetry_w,
        noise,
        Generation::Direct,
    )
    .map_err(|e| e.to_string())
}

fn criterion_3() -> Outcome {
    let truth = bus_truth();
    let sweep = bus_sweep(&truth, &NoiseModel::noiseless())?;
    let min_t2 = sweep.iter().map(|r| r.t2).fold(f64::INFINITY, f64::min);
    let fit = fit_single_mode(&sweep, None).map_err(|e| e.to_string())?;
    let got = fit.params.to_vector();
    let want = truth.to_vector();
    let worst = got
        .iter()
        .zip(&want)
        .map(|(g, w)| rel(*g, *w))
        .fold(0.0f64, f64::max);
    let q_err = rel(fit.q_factor, 1e5);
    check(
        worst <= 1e-3 && q_err <= 1e-3 && min_t2 < 1e-6,
        format!(
            "max param rel error {worst:.2e} (limit 1e-3), Q = {:.3} (rel {q_err:.1e}), on-resonance T2 {:.3} us",
            fit.q_factor,
            min_t2 * 1e6
        ),
    )
}

fn criterion_4() -> Outcome {
    let truth = bus_truth();
    let want = truth.to_vector();
    let mut inside = [0usize; 6];
    let mut failures = 0;
    for seed in 0..100u64 {
        let noise = NoiseModel {
            readout_sigma: 0.0,
            t2_jitter_rel: 0.02,
            seed,
        };
        let sweep = bus_sweep(&truth, &noise)?;
        match fit_single_mode(&sweep, None) {
            Ok(fit) => {
                let got = fit.params.to_vector();
                for i in 0..6 {
                    if (got[i] - want[i]).abs() <= 3.0 * fit.result.std_errors[i] {
                        inside[i] += 1;
                    }
                }
            }
            Err(_) => failures += 1,
        }
    }
    let summary: Vec<String> = PARAM_NAMES
        .iter()
        .zip(inside)
        .map(|(n, c)| format!("{n} {c}/100"))
        .collect();
    check(
        inside.iter().all(|&c| c >= 95),
        format!("{} (fit failures {failures})", summary.join(", ")),
    )
}

fn criterion_5() -> Outcome {
    let mode = bus_truth().mode("bus");
    let powers: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
    let conversion = W::from_khz(40.0).rad_per_s().powi(2);
    let points = power_sweep_with_offset(
        &mode,
        conversion,
        &powers,
        mode.omega_bare + W::from_khz(50.0),
        0.05,
    )
    .map_err(|e| e.to_string())?;
    let cal = photon_calibration(&points, mode.omega_bare).map_err(|e| e.to_string())?;
    let direct = photons_to_temperature(0.05, mode.omega_bare).map_err(|e| e.to_string())?;
    let Occupancy::Thermal { t0_kelvin, .. } = cal.occupancy else {
        return Err(format!(
            "no thermal occupancy reported: {:?}",
            cal.occupancy
        ));
    };
    let t_err = rel(t0_kelvin, direct);
    let inverse_err = rel(occupancy(t0_kelvin, mode.omega_bare), 0.05);
    let i_err = rel(cal.intercept, 0.05);
    check(
        cal.r_squared >= 1.0 - 1e-12 && i_err <= 1e-3 && t_err <= 1e-3 && inverse_err <= 1e-3,
        format!(
            "1-R^2 = {:.1e}, intercept rel error {i_err:.1e}, T0 = {:.4} mK (rel {t_err:.1e}, BE check {inverse_err:.1e})",
            1.0 - cal.r_squared,
            t0_kelvin * 1e3
        ),
    )
}

fn criterion_6() -> Outcome {
    let modes = vec![
        Mode::new("R1", W::from_ghz(6.4), W::from_khz(512.0), W::from_mhz(1.0)),
        Mode::new(
            "bus",
            W::from_ghz(7.24),
            W::from_khz(72.4),
            W::from_khz(300.0),
        ),
        Mode::new(
            "R1 second harmonic",
            W::from_ghz(12.8),
            W::from_mhz(1.0),
            W::from_khz(500.0),
        ),
    ]
    .into_iter()
    .collect::<Result<Vec<_>, _>>()
    .map_err(|e| e.to_string())?;
    let env = Environment::new(baseline_qubit(), modes).map_err(|e| e.to_string())?;
    let step = 5e6;
    let grid: Vec<W> = (0..=2200)
        .map(|i| W::from_hz(5e9 + step * i as f64))
        .collect();
    let noise = NoiseModel {
        readout_sigma: 0.0,
        t2_jitter_rel: 0.02,
        seed: 11,
    };
    let sweep = generate_rate_sweep(
        &env,
        W::from_mhz(1.0),
        &grid,
        0.5,
        &noise,
        Generation::Direct,
    )
    .map_err(|e| e.to_string())?;
    let prominence = default_min_prominence(&sweep).map_err(|e| e.to_string())?;
    let features =
        detect_features(&sweep, prominence, W::from_hz(10.0 * step)).map_err(|e| e.to_string())?;
    let catalog = ModeCatalog {
        rel_tolerance: 0.025,
        entries: vec![
            CatalogEntry {
                label: "R1".into(),
                frequency: W::from_ghz(6.4),
                origin: Origin::Designed,
            },
            CatalogEntry {
                label: "bus".into(),
                frequency: W::from_ghz(7.24),
                origin: Origin::Designed,
            },
        ],
    };
    let classified = classify(&features, &catalog, &[]).map_err(|e| e.to_string())?;
    let found: Vec<String> = classified
        .iter()
        .map(|f| format!("{:.3} GHz {:?}", f.center_freq.ghz(), f.classification))
        .collect();
    let expected = [
        (6.4e9, Classification::Designed),
        (7.24e9, Classification::Designed),
        (12.8e9, Classification::Harmonic),
    ];
    let ok = classified.len() == 3
        && classified.iter().zip(expected).all(|(f, (hz, class))| {
            (f.center_freq.hz() - hz).abs() <= step && f.classification == class
        });
    check(
        ok,
        format!("{} features: {}", classified.len(), found.join("; ")),
    )
}

fn criterion_7() -> Outcome {
    let feature = |ghz: f64| DetectedFeature {
        center_freq: W::from_ghz(ghz),
        depth: 1e4,
        prominence: 1e4,
        width: W::from_mhz(1.0),
        classification: Classification::Unknown,
        matched_label: None,
        match_error_rel: None,
    };
    let entry = |label: &str, ghz: f64, origin| CatalogEntry {
        label: label.into(),
        frequency: W::from_ghz(ghz),
        origin,
    };
    let catalog = ModeCatalog {
        rel_tolerance: 0.025,
        entries: vec![
            entry("R2", 9.882, Origin::Designed),
            entry("sim 7.838", 7.838, Origin::EmSimulated),
            entry("sim 9.873", 9.873, Origin::EmSimulated),
        ],
    };
    let out = classify(
        &[feature(7.805), feature(9.675), feature(9.881)],
        &catalog,
        &[],
    )
    .map_err(|e| e.to_string())?;
    let expected = [
        (Classification::Spurious, "sim 7.838", 0.0042),
        (Classification::Spurious, "sim 9.873", 0.020),
        (Classification::Designed, "R2", 0.0001),
    ];
    let mut ok = out.len() == 3;
    let mut lines = Vec::new();
    for (f, (class, label, err)) in out.iter().zip(expected) {
        let e = f.match_error_rel.unwrap_or(f64::NAN);
        ok &= f.classification == class
            && f.matched_label.as_deref() == Some(label)
            && (e - err).abs() < 5e-4;
        lines.push(format!(
            "{:.3} GHz {:?} {} ({:.2}%)",
            f.center_freq.ghz(),
            f.classification,
            f.matched_label.as_deref().unwrap_or("-"),
            e * 100.0
        ));
    }
    check(ok, lines.join("; "))
}

fn criterion_8() -> Outcome {
    use proptest::prelude::*;
    let cases = 1000;
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    let params = (
        1e3f64..5e6,
        -5e6f64..5e6,
        1e3f64..5e6,
        0.0f64..1.0,
        0.0f64..1.0,
    );

    let symmetry = runner.run(&params, |(kappa, chi, eps, _, frac)| {
        let mode = Mode::new("m", W::from_ghz(7.0), W::from_hz(kappa), W::from_hz(chi)).unwrap();
        let d = W::from_hz(frac * 5.0 * (kappa + chi.abs()));
        let up = measurement_dephasing_rate(
            &mode,
            &Drive::new(mode.omega_bare + d, W::from_hz(eps)).unwrap(),
            0.5,
        )
        .unwrap();
        let down = measurement_dephasing_rate(
            &mode,
            &Drive::new(mode.omega_bare - d, W::from_hz(eps)).unwrap(),
            0.5,
        )
        .unwrap();
        prop_assert!(
            (up - down).abs() <= 1e-9 * up.abs().max(down.abs()),
            "{up} vs {down}"
        );
        Ok(())
    });

    let mirror = runner.run(&params, |(kappa, chi, eps, w, frac)| {
        let p = ModeFitParams {
            omega_bare: W::from_ghz(7.0),
            kappa: W::from_hz(kappa),
            chi: W::from_hz(chi),
            epsilon_rf: W::from_hz(eps),
            asymmetry_w: w,
            gamma2_baseline: 1e4,
        };
        let c = p.canonical();
        prop_assert!(c.chi.rad_per_s() >= 0.0);
        prop_assert_eq!(c.canonical(), c);
        let f = W::from_ghz(7.0) + W::from_hz((frac - 0.5) * 10.0 * (kappa + chi.abs()));
        let (a, b) = (p.gamma2_at(f), c.gamma2_at(f));
        prop_assert!((a - b).abs() <= 1e-9 * a, "{a} vs {b}");
        Ok(())
    });

    let tail = runner.run(&params, |(kappa, chi, eps, w, frac)| {
        let mode = Mode::new("m", W::from_ghz(7.0), W::from_hz(kappa), W::from_hz(chi)).unwrap();
        let sign = if frac < 0.5 { -1.0 } else { 1.0 };
        let d = W::from_hz(sign * 200.0 * (kappa + chi.abs()));
        let near = measurement_dephasing_rate(
            &mode,
            &Drive::new(mode.omega_bare + d, W::from_hz(eps)).unwrap(),
            w,
        )
        .unwrap();
        let far = measurement_dephasing_rate(
            &mode,
            &Drive::new(mode.omega_bare + d * 2.0, W::from_hz(eps)).unwrap(),
            w,
        )
        .unwrap();
        if chi != 0.0 {
            prop_assert!((near / far - 16.0).abs() <= 0.16, "ratio {}", near / far);
        }
        Ok(())
    });

    let describe = |name: &str, r: &Result<(), proptest::test_runner::TestError<_>>| match r {
        Ok(()) => format!("{name} ok"),
        Err(e) => format!("{name} FAILED: {e}"),
    };
    let detail = format!(
        "{cases} draws each: {}, {}, {}",
        describe("peak symmetry", &symmetry),
        describe("mirror canonicalization", &mirror),
        describe("far-detuned ratio", &tail)
    );
    check(symmetry.is_ok() && mirror.is_ok() && tail.is_ok(), detail)
}

fn run_cli(args: &[&str], dir: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_modescope"))
        .args(args)
        .current_dir(dir)
        .env_remove("MODESCOPE_SEED")
        .status()
        .map_err(|e| e.to_string())?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("modescope {} exited with {status}", args.join(" ")))
    }
}

fn run_pipeline(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let config = r#"{
        "qubit": {"freq_hz": 6.0e9, "t2_s": 65e-6, "t1_s": 40e-6},
        "modes": [
            {"label": "R1", "freq_hz": 6.4e9, "kappa_hz": 512e3, "chi_hz": 1e6},
            {"label": "bus", "freq_hz": 7.24e9, "kappa_hz": 72.4e3, "chi_hz": 300e3}
        ],
        "drive": {"epsilon_hz": 120e3},
        "asymmetry_w": 0.4,
        "grid": {"start_hz": 7.2385e9, "stop_hz": 7.2415e9, "step_hz": 5e3},
        "noise": {"t2_jitter_rel": 0.02},
        "seed": 42
    }"#;
    let catalog = r#"{"rel_tolerance": 0.025, "entries": [{"label": "bus", "freq_hz": 7.24e9, "origin": "designed"}]}"#;
    let power = "power,n_bar\n0,0.05\n1,1.05\n2,2.05\n3,3.05\n";
    std::fs::write(dir.join("config.json"), config).map_err(|e| e.to_string())?;
    std::fs::write(dir.join("catalog.json"), catalog).map_err(|e| e.to_string())?;
    std::fs::write(dir.join("power.csv"), power).map_err(|e| e.to_string())?;

    run_cli(
        &["simulate", "--config", "config.json", "--out", "sweep.csv"],
        dir,
    )?;
    run_cli(
        &[
            "fit",
            "sweep.csv",
            "--window",
            "7.2385e9:7.2415e9",
            "--out",
            "fit.json",
        ],
        dir,
    )?;
    run_cli(
        &[
            "detect",
            "sweep.csv",
            "--catalog",
            "catalog.json",
            "--out",
            "detect.json",
        ],
        dir,
    )?;
    run_cli(
        &[
            "oracle",
            "--mode-kappa-hz",
            "1e6",
            "--mode-chi-hz",
            "5e5",
            "--epsilon-hz",
            "2e5",
            "--detuning-hz",
            "5e5",
            "--cutoff",
            "12",
            "--t-max-kappa",
            "40",
            "--samples",
            "400",
            "--out",
            "oracle.csv",
        ],
        dir,
    )?;
    run_cli(
        &[
            "report",
            "fit.json",
            "--power",
            "power.csv",
            "--sweep",
            "sweep.csv",
            "--out",
            "report.json",
        ],
        dir,
    )?;
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    Ok(files)
}

fn criterion_9() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = run_pipeline(a.path())?;
    let second = run_pipeline(b.path())?;
    let names: Vec<&str> = first.iter().map(|(n, _)| n.as_str()).collect();
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    check(
        first.len() == second.len() && differing.is_empty() && first.len() >= 11,
        format!(
            "{} files compared ({}); differing: {:?}",
            first.len(),
            names.join(", "),
            differing
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 oracle equivalence", criterion_1),
        ("2 photon number", criterion_2),
        ("3 fit round trip", criterion_3),
        ("4 noise coverage", criterion_4),
        ("5 power linearity and T0", criterion_5),
        ("6 spectrum reproduction", criterion_6),
        ("7 3D classification", criterion_7),
        ("8 symmetry and tail properties", criterion_8),
        ("9 CLI determinism", criterion_9),
    ];
    let mut stdout = std::io::stdout();
    let mut failed = 0;
    for (name, run) in criteria {
        let (tag, detail) = match run() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        writeln!(stdout, "criterion {name}: {tag} - {detail}").unwrap();
    }
    writeln!(stdout, "{} of 9 criteria passed", 9 - failed).unwrap();
    if failed > 0 {
        std::process::exit(1);
    }
}
